"""Transient link failures, node mobility and the adaptation that follows them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .topology import NetworkGraph, edge_betweenness_ranking

ALL_LINKS = "all-links"
BW_PERSIST = "bw-persist"
LOCAL_PERSIST = "local-persist"
FAILURE_KINDS = ("none", ALL_LINKS, BW_PERSIST, LOCAL_PERSIST)


# -- failures ------------------------------------------------------------------


@dataclass(eq=False)
class FailureModel:
    """Per-link failure probabilities and, for persistent kinds, event windows.

    ``p`` is fixed per run. Persistent events on targeted links start at
    rate p / mean_duration and last a truncated normal number of slots.
    With ``hard_down`` a link is unusable for the whole event; otherwise each
    transmission during an event fails with probability p.
    """

    kind: str
    p: np.ndarray
    targeted: np.ndarray
    mean_duration: float = 20.0
    duration_std: float = 5.0
    hard_down: bool = False
    active_until: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.kind not in FAILURE_KINDS:
            raise ValueError(f"unknown failure kind {self.kind!r}")
        self.p = np.asarray(self.p, dtype=float)
        if np.any(self.p < 0) or np.any(self.p > 1):
            raise ValueError("failure probabilities must lie in [0, 1]")
        if self.mean_duration < 1:
            raise ValueError("mean_duration must be at least 1")
        if self.active_until is None:
            self.active_until = np.full(len(self.p), -1, dtype=np.int64)

    @property
    def event_rate(self) -> np.ndarray:
        return self.p / self.mean_duration

    def remap(self, g_old: NetworkGraph, g_new: NetworkGraph, rng: np.random.Generator,
              p_max: float = 0.05) -> None:
        """Carry per-link state over to a new link set; new links draw fresh p."""
        p = rng.uniform(0.0, p_max, g_new.n_links)
        targeted = np.zeros(g_new.n_links, dtype=bool)
        until = np.full(g_new.n_links, -1, dtype=np.int64)
        for e, key in enumerate(map(tuple, g_old.links.tolist())):
            f = g_new.link_index.get(key)
            if f is not None:
                p[f], targeted[f], until[f] = self.p[e], self.targeted[e], self.active_until[e]
        self.p, self.targeted, self.active_until = p, targeted, until


def local_disk_links(g: NetworkGraph, rng: np.random.Generator, frac=(0.05, 0.06)) -> np.ndarray:
    """Links with both endpoints inside a random disk holding a node fraction in ``frac``."""
    n = g.n_nodes
    lo, hi = int(np.ceil(frac[0] * n)), int(np.floor(frac[1] * n))
    hi = max(hi, lo)
    for _ in range(100):
        center = rng.uniform(0.0, g.area_side, 2)
        d = np.sort(np.hypot(*(g.positions - center).T))
        a, b = 0.0, g.area_side * np.sqrt(2)
        for _ in range(60):
            r = 0.5 * (a + b)
            k = int(np.searchsorted(d, r, side="right"))
            if k < lo:
                a = r
            elif k > hi:
                b = r
            else:
                inside = np.hypot(*(g.positions - center).T) <= r
                return np.flatnonzero(inside[g.src] & inside[g.dst])
    raise RuntimeError("could not place a disk with the requested node fraction")


def make_failure_model(g: NetworkGraph, kind: str, rng: np.random.Generator, p_max: float = 0.05,
                       mean_duration: float = 20.0, duration_std: float = 5.0, top_frac: float = 0.05,
                       hard_down: bool = False) -> FailureModel:
    if kind not in FAILURE_KINDS:
        raise ValueError(f"unknown failure kind {kind!r}")
    p = rng.uniform(0.0, p_max, g.n_links)
    targeted = np.zeros(g.n_links, dtype=bool)
    if kind == "none":
        p[:] = 0.0
    elif kind == ALL_LINKS:
        targeted[:] = True
    elif kind == BW_PERSIST:
        k = max(1, int(round(top_frac * g.n_links)))
        targeted[edge_betweenness_ranking(g)[:k]] = True
    else:
        targeted[local_disk_links(g, rng)] = True
    return FailureModel(kind, p, targeted, mean_duration, duration_std, hard_down)


def failure_mask(fm: FailureModel, t: int, rng: np.random.Generator) -> np.ndarray:
    """Boolean mask of links that cannot transmit in slot ``t``.

    The same random draws are consumed every slot regardless of outcomes,
    so masks depend only on the model and the stream.
    """
    n = len(fm.p)
    u = rng.random(n)
    if fm.kind == "none":
        return np.zeros(n, dtype=bool)
    if fm.kind == ALL_LINKS:
        return u < fm.p
    starts = rng.random(n) < fm.event_rate
    durations = np.maximum(1, np.rint(rng.normal(fm.mean_duration, fm.duration_std, n))).astype(np.int64)
    new = starts & fm.targeted & (fm.active_until < t)
    fm.active_until[new] = t + durations[new] - 1
    active = fm.targeted & (fm.active_until >= t)
    if fm.hard_down:
        return active
    return active & (u < fm.p)


def apply_failures(schedule, mask, ph=None, decay: float = 0.05) -> tuple[np.ndarray, np.ndarray]:
    """Drop failed links from a schedule and decay their pheromone.

    Returns the effective schedule and the failed scheduled links.
    """
    schedule = np.asarray(schedule, dtype=bool)
    hit = schedule & np.asarray(mask, dtype=bool)
    failed = np.flatnonzero(hit)
    if ph is not None and failed.size:
        ph.rho[failed] = np.maximum(ph.rho[failed] * (1.0 - decay), ph.epsilon)
    return schedule & ~hit, failed


# -- mobility ------------------------------------------------------------------


@dataclass(frozen=True)
class MobilityModel:
    """Constrained Gaussian random walk of a random node subset.

    All mobile nodes take ``walk_steps`` joint N(0, sigma^2 I) steps. A
    step is redrawn up to ``tries`` times when it disconnects the network
    and skipped if none succeeds. Coordinates leaving the square keep
    their previous value.
    """

    mobile_nodes: int = 0
    sigma: float = 0.1
    walk_steps: int = 1000
    tries: int = 10
    trigger: int = 500
    pause: int = 10
    update: int = 600

    def __post_init__(self):
        if self.mobile_nodes < 0 or self.walk_steps < 0 or self.tries < 1:
            raise ValueError("mobility counts must be nonnegative, tries positive")
        if self.sigma < 0 or self.pause < 0:
            raise ValueError("sigma and pause must be nonnegative")
        if self.update < self.trigger:
            raise ValueError("virtual update must not precede the mobility trigger")

    @property
    def resume(self) -> int:
        return self.update + self.pause


@dataclass(eq=False)
class MobilityResult:
    graph: NetworkGraph
    removed: np.ndarray
    added: np.ndarray
    moved: np.ndarray
    skipped_steps: int = 0

    def removal_ratio(self, g_old: NetworkGraph) -> float:
        old = {tuple(e) for e in g_old.undirected_edges().tolist()}
        new = {tuple(e) for e in self.graph.undirected_edges().tolist()}
        return len(old - new) / len(old) if old else 0.0


def _connected(adj: np.ndarray) -> bool:
    if not adj.any(axis=1).all():
        return False
    seen = np.zeros(len(adj), dtype=bool)
    seen[0] = True
    frontier = seen.copy()
    while frontier.any():
        nxt = adj[frontier].any(axis=0) & ~seen
        seen |= nxt
        frontier = nxt
    return bool(seen.all())


def _adjacency(pos: np.ndarray, radius: float) -> np.ndarray:
    sq = np.einsum("ij,ij->i", pos, pos)
    d2 = sq[:, None] + sq[None, :] - 2.0 * pos @ pos.T
    adj = d2 <= radius * radius
    np.fill_diagonal(adj, False)
    return adj


def mobility_event(g: NetworkGraph, mm: MobilityModel, rng: np.random.Generator) -> MobilityResult:
    """Move ``mm.mobile_nodes`` random nodes; returns the new graph and directed link diff.

    ``removed`` indexes links of ``g``; ``added`` indexes links of the new graph.
    """
    n, side = g.n_nodes, g.area_side
    m = min(mm.mobile_nodes, n)
    mobile = np.sort(rng.choice(n, m, replace=False)) if m else np.zeros(0, dtype=np.int64)
    pos = g.positions.copy()
    skipped = 0
    if m and mm.sigma > 0:
        for _ in range(mm.walk_steps):
            for _ in range(mm.tries):
                prop = pos[mobile] + rng.normal(0.0, mm.sigma, (m, 2))
                prop = np.where((prop < 0) | (prop > side), pos[mobile], prop)
                cand = pos.copy()
                cand[mobile] = prop
                if _connected(_adjacency(cand, g.radius)):
                    pos = cand
                    break
            else:
                skipped += 1
    g_new = NetworkGraph.from_positions(pos, side, g.radius)
    # rounding in the two distance formulas can disagree right at the radius
    if not g_new.is_connected():
        g_new, pos = g, g.positions
    removed = np.array([e for e, k in enumerate(map(tuple, g.links.tolist())) if k not in g_new.link_index],
                       dtype=np.int64)
    added = np.array([f for f, k in enumerate(map(tuple, g_new.links.tolist())) if k not in g.link_index],
                     dtype=np.int64)
    return MobilityResult(g_new, removed, added, mobile, skipped)


def remap_pheromone(ph, g_old: NetworkGraph, g_new: NetworkGraph, new_links: str = "epsilon"):
    """Pheromone on the new link set.

    Surviving links keep their values. New links get epsilon, or with
    ``new_links="mean"`` the mean over the node's surviving out-links per
    commodity (epsilon when none survived).
    """
    from .virtualplane import PheromoneField

    rho = np.full((g_new.n_links, ph.rho.shape[1]), ph.epsilon)
    fresh = np.ones(g_new.n_links, dtype=bool)
    for e, key in enumerate(map(tuple, g_old.links.tolist())):
        f = g_new.link_index.get(key)
        if f is not None:
            rho[f] = ph.rho[e]
            fresh[f] = False
    if new_links == "mean":
        for i in np.unique(g_new.src[fresh]).tolist():
            out = np.arange(g_new.out_start[i], g_new.out_start[i + 1])
            kept = out[~fresh[out]]
            if kept.size:
                rho[out[fresh[out]]] = rho[kept].mean(axis=0)
    elif new_links != "epsilon":
        raise ValueError(f"unknown new-link rule {new_links!r}")
    return PheromoneField(rho, ph.epsilon)


def adapt_after_mobility(router, res: MobilityResult, ctx_new, new_links: str | None = None) -> int:
    """Switch a router to the post-move network.

    Packets queued on broken links go back to their undecided queues in
    FIFO order, pheromone moves to the new link set and the forwarding
    policy is renormalized. Returns the number of reverted packets.
    """
    g_old = router.ctx.g
    reverted = router.plane.remap(res.graph)
    if router.ph is not None:
        if new_links is None:
            new_links = "epsilon" if getattr(router, "virtual_update", True) else "mean"
        router.ph = remap_pheromone(router.ph, g_old, res.graph, new_links)
    colony = getattr(router, "colony", None)
    if colony is not None:
        colony.remap(g_old, res.graph)
    router.ctx = ctx_new
    router.refresh_policy()
    return reverted
