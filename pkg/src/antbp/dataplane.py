"""Physical per-neighbor FIFO queueing system with probabilistic forwarding.

Per slot: exogenous arrivals enter the undecided queue Q_ii of their source,
every undecided packet is forwarded into one per-neighbor queue Q_ij drawn
from the per-commodity policy, link utilities q_ij * r_ij(t) feed the
scheduler, and each active link sends min(q_ij, r_ij(t)) packets from the
head of Q_ij. Transmissions in slot t land at the receiver at t + 1.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .scheduling import lgs_schedule
from .topology import NetworkGraph


class InvariantViolation(AssertionError):
    pass


@dataclass
class Packet:
    id: int
    commodity: int
    src: int
    injected_at: int
    delivered_at: int | None = None
    hops: int = 0


@dataclass(frozen=True)
class ArrivalEvent:
    slot: int
    node: int
    commodity: int
    count: int
    flow: int = -1


class ForwardingPolicy:
    """Per-commodity next-hop probabilities ``prob[link, commodity]``."""

    def __init__(self, g: NetworkGraph, prob: np.ndarray):
        self.g = g
        self.prob = np.asarray(prob, dtype=float)

    @classmethod
    def from_weights(cls, g: NetworkGraph, weights: np.ndarray) -> "ForwardingPolicy":
        """Normalize nonnegative link weights over each node's outgoing links."""
        weights = np.asarray(weights, dtype=float)
        if np.any(g.degree == 0):
            raise ValueError("node without neighbors cannot forward")
        totals = np.add.reduceat(weights, g.out_start[:-1], axis=0)
        if np.any(totals <= 0):
            node, comm = np.argwhere(totals <= 0)[0]
            raise ValueError(f"zero routing mass at node {node} for commodity {comm}")
        return cls(g, weights / totals[g.src])

    @classmethod
    def uniform(cls, g: NetworkGraph, n_commodities: int | None = None) -> "ForwardingPolicy":
        c = g.n_nodes if n_commodities is None else n_commodities
        return cls.from_weights(g, np.ones((g.n_links, c)))

    @cached_property
    def cumulative(self) -> np.ndarray:
        cs = np.cumsum(self.prob, axis=0)
        starts = self.g.out_start[:-1]
        base = np.where(starts[:, None] > 0, cs[np.maximum(starts - 1, 0)], 0.0)
        return cs - base[self.g.src]

    def node_sums(self) -> np.ndarray:
        return np.add.reduceat(self.prob, self.g.out_start[:-1], axis=0)

    def check(self, tol: float = 1e-9) -> None:
        if np.any(self.prob < -tol) or np.any(self.prob > 1 + tol):
            raise InvariantViolation("forwarding probability outside [0, 1]")
        if not np.allclose(self.node_sums(), 1.0, atol=tol, rtol=0):
            raise InvariantViolation("forwarding probabilities do not sum to one")

    def draw(self, node: int, commodities: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Sample one outgoing link index per packet of ``node``."""
        a, b = self.g.out_start[node], self.g.out_start[node + 1]
        if b == a:
            raise ValueError(f"node {node} has no neighbors")
        cum = self.cumulative[a:b][:, commodities]
        u = rng.random(len(commodities)) * cum[-1]
        pick = np.minimum((cum < u).sum(axis=0), b - a - 1)
        return a + pick


@dataclass
class SlotReport:
    t: int
    injected: int = 0
    delivered: int = 0
    routing_cost: float = 0.0
    backlog: int = 0
    scheduled: int = 0
    moves: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))
    failed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    paused: bool = False
    schedule: np.ndarray | None = None


class PacketTable:
    """Columnar packet records; row index is the packet id."""

    def __init__(self):
        self.commodity: list[int] = []
        self.src: list[int] = []
        self.flow: list[int] = []
        self.injected_at: list[int] = []
        self.delivered_at: list[int] = []
        self.hops: list[int] = []
        self.paths: list[list[int]] | None = None

    def __len__(self) -> int:
        return len(self.commodity)

    def add(self, src: int, commodity: int, t: int, flow: int = -1) -> int:
        k = len(self.commodity)
        self.commodity.append(commodity)
        self.src.append(src)
        self.flow.append(flow)
        self.injected_at.append(t)
        self.delivered_at.append(-1)
        self.hops.append(0)
        if self.paths is not None:
            self.paths.append([])
        return k

    def get(self, k: int) -> Packet:
        d = self.delivered_at[k]
        return Packet(k, self.commodity[k], self.src[k], self.injected_at[k],
                      None if d < 0 else d, self.hops[k])

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: np.asarray(getattr(self, name), dtype=np.int64)
                for name in ("commodity", "src", "flow", "injected_at", "delivered_at", "hops")}


class PacketSystem:
    """Packet records, counters and the derived backlog matrix Q_i^(c)."""

    def __init__(self, g: NetworkGraph, track_paths: bool = False):
        self.g = g
        self.packets = PacketTable()
        if track_paths:
            self.packets.paths = []
        self.injected = 0
        self.delivered = 0
        self.newly_delivered: list[int] = []
        self.backlog = np.zeros((g.n_nodes, g.n_nodes), dtype=np.int64)

    def in_queue(self) -> int:
        return int(self.backlog.sum())

    def _admit(self, node: int, k: int) -> None:
        raise NotImplementedError

    def inject(self, events, t: int | None = None) -> int:
        """Admit exogenous arrivals; packets already at their destination are consumed."""
        n = 0
        for ev in events:
            slot = ev.slot if t is None else t
            for _ in range(int(ev.count)):
                k = self.packets.add(ev.node, ev.commodity, slot, ev.flow)
                n += 1
                if ev.node == ev.commodity:
                    self.packets.delivered_at[k] = slot
                    self.delivered += 1
                    self.newly_delivered.append(k)
                else:
                    self._admit(ev.node, k)
                    self.backlog[ev.node, ev.commodity] += 1
        self.injected += n
        return n


class DataPlane(PacketSystem):
    """Per-neighbor FIFO queue state plus packet accounting for one network."""

    def __init__(self, g: NetworkGraph, track_paths: bool = False):
        super().__init__(g, track_paths)
        self.undecided = [deque() for _ in range(g.n_nodes)]
        self.link_q = [deque() for _ in range(g.n_links)]
        self.qlen = np.zeros(g.n_links, dtype=np.int64)

    def _admit(self, node: int, k: int) -> None:
        self.undecided[node].append(k)

    def recount_backlog(self) -> np.ndarray:
        """Q_i^(c) recomputed from the queue contents."""
        out = np.zeros_like(self.backlog)
        com = self.packets.commodity
        for i, dq in enumerate(self.undecided):
            for k in dq:
                out[i, com[k]] += 1
        for e, dq in enumerate(self.link_q):
            i = self.g.src[e]
            for k in dq:
                out[i, com[k]] += 1
        return out

    def forward_undecided(self, policy: ForwardingPolicy, rng: np.random.Generator) -> None:
        com = self.packets.commodity
        for i, dq in enumerate(self.undecided):
            if not dq:
                continue
            ids = list(dq)
            dq.clear()
            links = policy.draw(i, np.fromiter((com[k] for k in ids), dtype=np.int64, count=len(ids)), rng)
            for k, e in zip(ids, links.tolist()):
                self.link_q[e].append(k)
            self.qlen += np.bincount(links, minlength=self.g.n_links)

    def compute_utilities(self, rdot) -> np.ndarray:
        return self.qlen * np.asarray(rdot)

    def transmit(self, schedule, rdot, t: int, failed=None) -> np.ndarray:
        """Send min(q, r) head-of-line packets on every active link.

        Returns moves as rows ``(link, commodity, count)``.
        """
        active = np.asarray(schedule, dtype=bool) & (self.qlen > 0)
        if failed is not None:
            active &= ~np.asarray(failed, dtype=bool)
        com = self.packets.commodity
        hops = self.packets.hops
        paths = self.packets.paths
        rows = []
        for e in np.flatnonzero(active).tolist():
            i, j = int(self.g.src[e]), int(self.g.dst[e])
            m = int(min(self.qlen[e], rdot[e]))
            if m <= 0:
                continue
            dq = self.link_q[e]
            sent: dict[int, int] = {}
            for _ in range(m):
                k = dq.popleft()
                c = com[k]
                hops[k] += 1
                if paths is not None:
                    paths[k].append(e)
                sent[c] = sent.get(c, 0) + 1
                if c == j:
                    self.packets.delivered_at[k] = t + 1
                    self.newly_delivered.append(k)
                else:
                    self.undecided[j].append(k)
            self.qlen[e] -= m
            for c, cnt in sent.items():
                self.backlog[i, c] -= cnt
                if c != j:
                    self.backlog[j, c] += cnt
                else:
                    self.delivered += cnt
                rows.append((e, c, cnt))
        if not rows:
            return np.zeros((0, 3), dtype=np.int64)
        return np.asarray(rows, dtype=np.int64)

    def step(self, t: int, events, policy: ForwardingPolicy, rdot, rng: np.random.Generator,
             cg=None, scheduler=lgs_schedule, failed=None, bias=None) -> SlotReport:
        """One slot: inject, forward, utilities, schedule, transmit."""
        rep = SlotReport(t)
        rep.injected = self.inject(events, t)
        self.forward_undecided(policy, rng)
        u = self.compute_utilities(rdot)
        s = scheduler(cg, u)
        before = self.delivered
        rep.moves = self.transmit(s, rdot, t, failed)
        rep.delivered = self.delivered - before
        rep.scheduled = int(s.sum())
        rep.schedule = s
        if failed is not None:
            rep.failed = np.flatnonzero(s & np.asarray(failed, dtype=bool))
        rep.routing_cost = routing_cost(self.g, rep.moves, bias)
        rep.backlog = self.in_queue()
        return rep

    # -- topology change ------------------------------------------------

    def revert_links(self, links) -> int:
        """Move packets of the given per-neighbor queues back to Q_ii, FIFO order."""
        moved = 0
        for e in sorted(int(x) for x in links):
            dq = self.link_q[e]
            i = int(self.g.src[e])
            moved += len(dq)
            self.undecided[i].extend(dq)
            dq.clear()
            self.qlen[e] = 0
        return moved

    def remap(self, g_new: NetworkGraph) -> int:
        """Switch to a new link set; queues of vanished links revert to Q_ii."""
        gone = [e for e, key in enumerate(map(tuple, self.g.links.tolist())) if key not in g_new.link_index]
        reverted = self.revert_links(gone)
        new_q = [deque() for _ in range(g_new.n_links)]
        qlen = np.zeros(g_new.n_links, dtype=np.int64)
        for e, (a, b) in enumerate(self.g.links.tolist()):
            f = g_new.link_index.get((a, b))
            if f is not None:
                new_q[f] = self.link_q[e]
                qlen[f] = self.qlen[e]
        self.g, self.link_q, self.qlen = g_new, new_q, qlen
        return reverted


def routing_cost(g: NetworkGraph, moves: np.ndarray, bias) -> float:
    """Sum over moves of count * (B_j^(c) - B_i^(c)); negative means progress."""
    if bias is None or len(moves) == 0:
        return 0.0
    b = bias.bias if hasattr(bias, "bias") else np.asarray(bias)
    e, c, cnt = moves[:, 0], moves[:, 1], moves[:, 2]
    return float(np.sum(cnt * (b[g.dst[e], c] - b[g.src[e], c])))
