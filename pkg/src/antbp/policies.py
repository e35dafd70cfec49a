"""Routing schemes behind one router interface.

Ant-BP and its variants learn a pheromone field on the virtual plane and
forward physical packets through per-neighbor queues. SP-BP runs biased
backpressure directly on physical per-commodity queues. The ACO baselines
keep pheromone updated by ants instead of virtual backpressure counts.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np

from .dataplane import ArrivalEvent, DataPlane, ForwardingPolicy, PacketSystem, SlotReport, routing_cost
from .scheduling import lgs_schedule
from .topology import BiasField, ConflictGraph, LinkRateModel, NetworkGraph
from .traffic import FlowSpec, virtualize_flows
from .virtualplane import (
    BackpressureDecision,
    PheromoneField,
    VirtualPlaneState,
    backpressure_decide,
    policy_from_pheromone,
    run_virtual_spbp,
    virtual_arrivals,
)


class PolicyKind(str, Enum):
    ANTBP = "antbp"
    ANTBP_MIRROR = "antbp-mirror"
    ANTBP_NOVIRT = "antbp-novirt"
    SPBP = "spbp"
    ANT_BASELINE = "ant-baseline"
    ANT_IDEAL = "ant-ideal"


@dataclass(frozen=True)
class SchemeParams:
    alpha: float = 1.0
    beta: float = 0.0
    deposit: float = 0.01
    evaporation: float = 0.002
    rho_init: float = 1.3
    floor: float = 0.01
    ant_interval: int = 100
    exploration: float = 0.1
    hop_cap_factor: int = 4
    failure_decay: float = 0.05

    def __post_init__(self):
        if not 0 <= self.evaporation < 1:
            raise ValueError("evaporation must be in [0, 1)")
        if not 0 <= self.exploration <= 1:
            raise ValueError("exploration must be in [0, 1]")
        if not 0 <= self.failure_decay < 1:
            raise ValueError("failure_decay must be in [0, 1)")
        if self.ant_interval < 1 or self.hop_cap_factor < 1:
            raise ValueError("ant_interval and hop_cap_factor must be positive")
        if self.floor <= 0 or self.rho_init <= 0 or self.deposit < 0:
            raise ValueError("floor and rho_init must be positive, deposit nonnegative")


# -- ACO forms ---------------------------------------------------------------


@dataclass(frozen=True)
class AntPath:
    commodity: int
    links: tuple[int, ...]
    departed: int
    arrived: int

    @property
    def latency(self) -> int:
        return self.arrived - self.departed

    def is_valid(self, g: NetworkGraph) -> bool:
        if not self.links:
            return False
        e = np.asarray(self.links)
        if np.any(g.dst[e[:-1]] != g.src[e[1:]]):
            return False
        return int(g.dst[e[-1]]) == self.commodity


def aco_policy(ph: PheromoneField, g: NetworkGraph, alpha: float = 1.0, beta: float = 0.0,
               heuristic: np.ndarray | None = None) -> ForwardingPolicy:
    """Classic ACO rule, p proportional to rho^alpha * h^beta."""
    rho = ph.rho
    if np.any(rho <= 0):
        raise ValueError("pheromone must be positive")
    w = rho if alpha == 1 else rho ** alpha
    if beta != 0:
        if heuristic is None:
            raise ValueError("beta != 0 needs a heuristic")
        h = np.asarray(heuristic, dtype=float)
        if np.any(h <= 0):
            raise ValueError("heuristic must be positive")
        if h.ndim == 1:
            h = h[:, None]
        w = w * h ** beta
    return ForwardingPolicy.from_weights(g, w)


def aco_bias_weights(ph: PheromoneField, grad: np.ndarray, floor: float = 0.01) -> np.ndarray:
    return np.maximum(ph.rho + grad, floor)


def aco_bias_policy(ph: PheromoneField, bias: BiasField, g: NetworkGraph, floor: float = 0.01,
                    grad: np.ndarray | None = None) -> ForwardingPolicy:
    """p proportional to rho + (B_i - B_j), numerators clamped at ``floor``."""
    grad = bias.gradient(g) if grad is None else grad
    return ForwardingPolicy.from_weights(g, aco_bias_weights(ph, grad, floor))


def aco_update(ph: PheromoneField, ants, evaporation: float, deposit: str = "constant",
               theta: float = 0.01, floor: float | None = None) -> PheromoneField:
    """Evaporate everywhere, then deposit on each link an arrived ant used.

    ``deposit`` is ``"constant"`` (theta per ant) or ``"inverse-latency"``.
    Updates ``ph`` in place and returns it.
    """
    if evaporation:
        ph.rho *= 1.0 - evaporation
    for a in ants:
        if deposit == "constant":
            amount = theta
        elif deposit == "inverse-latency":
            amount = 1.0 / max(a.latency, 1)
        else:
            raise ValueError(f"unknown deposit rule {deposit!r}")
        ph.rho[np.unique(np.asarray(a.links, dtype=np.int64)), a.commodity] += amount
    if floor is not None:
        np.maximum(ph.rho, floor, out=ph.rho)
    return ph


def decay_pheromone(ph: PheromoneField, links, decay: float = 0.05) -> None:
    """Scale all commodities of the given links by (1 - decay), floored at epsilon."""
    links = np.asarray(links, dtype=np.int64)
    if links.size:
        ph.rho[links] = np.maximum(ph.rho[links] * (1.0 - decay), ph.epsilon)


# -- SP-BP on physical queues -------------------------------------------------


class SpBpPlane(PacketSystem):
    """Physical per-(node, commodity) FIFO queues driven by biased backpressure."""

    def __init__(self, g: NetworkGraph):
        super().__init__(g)
        self.queues: dict[tuple[int, int], deque] = {}

    def _admit(self, node: int, k: int) -> None:
        key = (node, self.packets.commodity[k])
        q = self.queues.get(key)
        if q is None:
            q = self.queues[key] = deque()
        q.append(k)

    def recount_backlog(self) -> np.ndarray:
        out = np.zeros_like(self.backlog)
        for (i, c), q in self.queues.items():
            out[i, c] += len(q)
        return out

    def transmit(self, d: BackpressureDecision, t: int) -> np.ndarray:
        rows = []
        hops = self.packets.hops
        for e in np.flatnonzero(d.moved > 0).tolist():
            i, j = int(self.g.src[e]), int(self.g.dst[e])
            c, m = int(d.commodity[e]), int(d.moved[e])
            q = self.queues[(i, c)]
            for _ in range(m):
                k = q.popleft()
                hops[k] += 1
                if j == c:
                    self.packets.delivered_at[k] = t + 1
                    self.newly_delivered.append(k)
                else:
                    self._admit(j, k)
            self.backlog[i, c] -= m
            if j == c:
                self.delivered += m
            else:
                self.backlog[j, c] += m
            rows.append((e, c, m))
        if not rows:
            return np.zeros((0, 3), dtype=np.int64)
        return np.asarray(rows, dtype=np.int64)

    def step(self, t: int, events, rdot, cg: ConflictGraph, grad: np.ndarray, scheduler=lgs_schedule,
             failed=None, bias=None) -> tuple[SlotReport, BackpressureDecision]:
        rep = SlotReport(t)
        rep.injected = self.inject(events, t)
        d = backpressure_decide(self.backlog, grad, self.g, cg, rdot, scheduler, failed)
        before = self.delivered
        rep.moves = self.transmit(d, t)
        rep.delivered = self.delivered - before
        rep.scheduled = int(d.schedule.sum())
        rep.schedule = d.schedule
        if failed is not None:
            rep.failed = np.flatnonzero(d.schedule & np.asarray(failed, dtype=bool))
        rep.routing_cost = routing_cost(self.g, rep.moves, bias)
        rep.backlog = self.in_queue()
        return rep, d

    def remap(self, g_new: NetworkGraph) -> int:
        self.g = g_new
        return 0


def spbp_step(plane: SpBpPlane, bias: BiasField, cg: ConflictGraph, rates: LinkRateModel,
              rng: np.random.Generator, t: int, events=(), failed=None) -> SlotReport:
    rdot = rates.sample(rng)
    rep, _ = plane.step(t, events, rdot, cg, bias.gradient(plane.g), failed=failed, bias=bias)
    return rep


# -- virtual ACO phase (Ant-Baseline) ------------------------------------------


def _flow_events(flows: list[FlowSpec], counts, t: int) -> list[ArrivalEvent]:
    return [ArrivalEvent(t, f.src, f.dst, int(k), idx)
            for idx, (f, k) in enumerate(zip(flows, counts)) if k]


def run_virtual_aco(g: NetworkGraph, cg: ConflictGraph, bias: BiasField, virtual_flows: list[FlowSpec],
                    steps: int, rates: LinkRateModel, rng: np.random.Generator,
                    params: SchemeParams = SchemeParams(), scheduler=lgs_schedule,
                    ph: PheromoneField | None = None, initial_events=()) -> tuple[PheromoneField, DataPlane]:
    """Ants as virtual packets through per-neighbor queues and the same scheduler.

    The forwarding policy is rebuilt from the pheromone every step. Each ant
    that reaches its destination deposits a constant amount on its path.
    """
    if ph is None:
        ph = PheromoneField(np.full((g.n_links, g.n_nodes), params.rho_init), params.floor)
    dp = DataPlane(g, track_paths=True)
    grad = bias.gradient(g)
    dp.inject(initial_events, 0)
    for tau in range(steps):
        counts = virtual_arrivals(virtual_flows, tau, rng)
        policy = ForwardingPolicy.from_weights(g, aco_bias_weights(ph, grad, params.floor))
        dp.newly_delivered.clear()
        dp.step(tau, _flow_events(virtual_flows, counts, tau), policy, rates.sample(rng), rng, cg, scheduler)
        p = dp.packets
        ants = [AntPath(p.commodity[k], tuple(p.paths[k]), p.injected_at[k], p.delivered_at[k])
                for k in dp.newly_delivered if p.paths[k]]
        aco_update(ph, ants, params.evaporation, "constant", params.deposit, params.floor)
    return ph, dp


# -- Ant-Ideal proactive ants --------------------------------------------------


@dataclass
class _Ant:
    commodity: int
    node: int
    departed: int
    links: list = field(default_factory=list)


class AntColony:
    """Capacity-free proactive ants, one per ``interval`` injected packets of a flow."""

    def __init__(self, flows: list[FlowSpec], n_nodes: int, params: SchemeParams = SchemeParams()):
        self.flows = flows
        self.params = params
        self.hop_cap = params.hop_cap_factor * n_nodes
        self.counts = np.zeros(len(flows), dtype=np.int64)
        self.ants: list[_Ant] = []
        self.emitted = 0
        self.arrived = 0
        self.discarded = 0

    def observe_injections(self, per_flow, t: int) -> int:
        per_flow = np.asarray(per_flow, dtype=np.int64)
        before = self.counts // self.params.ant_interval
        self.counts += per_flow
        new = self.counts // self.params.ant_interval - before
        for k in np.flatnonzero(new).tolist():
            f = self.flows[k]
            for _ in range(int(new[k])):
                self.ants.append(_Ant(f.dst, f.src, t))
        n = int(new.sum())
        self.emitted += n
        return n

    def step(self, g: NetworkGraph, policy: ForwardingPolicy, rng: np.random.Generator, t: int) -> list[AntPath]:
        """Move every ant one hop; return the paths of ants that arrived."""
        done: list[AntPath] = []
        alive = []
        for ant in self.ants:
            a, b = g.out_start[ant.node], g.out_start[ant.node + 1]
            if b == a:
                self.discarded += 1
                continue
            if rng.random() < self.params.exploration:
                e = int(a + rng.integers(b - a))
            else:
                e = int(policy.draw(ant.node, np.array([ant.commodity]), rng)[0])
            ant.links.append(e)
            ant.node = int(g.dst[e])
            if ant.node == ant.commodity:
                done.append(AntPath(ant.commodity, tuple(ant.links), ant.departed, t + 1))
            elif len(ant.links) >= self.hop_cap:
                self.discarded += 1
            else:
                alive.append(ant)
        self.ants = alive
        self.arrived += len(done)
        return done

    def remap(self, g_old: NetworkGraph, g_new: NetworkGraph) -> None:
        """Re-index recorded links; ants whose path used a vanished link are dropped."""
        alive = []
        for ant in self.ants:
            keys = [tuple(g_old.links[e]) for e in ant.links]
            if all(k in g_new.link_index for k in keys):
                ant.links = [g_new.link_index[k] for k in keys]
                alive.append(ant)
            else:
                self.discarded += 1
        self.ants = alive


def ant_ideal_step(colony: AntColony, ph: PheromoneField, policy: ForwardingPolicy, rng: np.random.Generator,
                   t: int, g: NetworkGraph | None = None) -> list[AntPath]:
    """Advance ants one slot and apply evaporation plus 1/latency deposits."""
    g = policy.g if g is None else g
    arrived = colony.step(g, policy, rng, t)
    p = colony.params
    aco_update(ph, arrived, p.evaporation, "inverse-latency", floor=p.floor)
    return arrived


# -- routers -------------------------------------------------------------------


@dataclass(eq=False)
class RoutingContext:
    """Network view shared by all schemes; replaced wholesale after mobility."""

    g: NetworkGraph
    cg: ConflictGraph
    bias: BiasField
    rates: LinkRateModel
    flows: list[FlowSpec]
    virtual_steps: int = 1000
    epsilon: float = 0.01
    virtual_loads: tuple[float, float] | None = None
    rate_mode: str = "own"
    scheduler: object = lgs_schedule

    @cached_property
    def grad(self) -> np.ndarray:
        return self.bias.gradient(self.g)


class Router:
    """Common interface: prepare once, then one call per physical slot."""

    kind: PolicyKind
    uses_pheromone = True

    def __init__(self, ctx: RoutingContext, params: SchemeParams = SchemeParams()):
        self.ctx = ctx
        self.params = params
        self.plane: PacketSystem = DataPlane(ctx.g)
        self.ph: PheromoneField | None = None
        self.policy: ForwardingPolicy | None = None
        self.virtual_exchanges = 0
        self.ants_emitted = 0

    def prepare(self, rng: np.random.Generator, initial_backlogs=None) -> None:
        raise NotImplementedError

    def refresh_policy(self) -> None:
        self.policy = policy_from_pheromone(self.ph, self.ctx.g)

    def step(self, t: int, events, rdot, rng: np.random.Generator, failed=None) -> SlotReport:
        return self.plane.step(t, events, self.policy, rdot, rng, self.ctx.cg, self.ctx.scheduler,
                               failed, self.ctx.bias)

    def on_failures(self, links) -> None:
        if self.ph is not None and len(links):
            decay_pheromone(self.ph, links, self.params.failure_decay)
            self.refresh_policy()

    def on_injections(self, per_flow, t: int) -> None:
        pass

    def after_slot(self, t: int, rng: np.random.Generator) -> None:
        pass

    def overhead(self) -> dict[str, int]:
        return {"virtual_exchanges": self.virtual_exchanges, "ants_emitted": self.ants_emitted}


class AntBPRouter(Router):
    kind = PolicyKind.ANTBP
    mode = "streaming-all"
    virtual_update = True

    def virtual_flows(self) -> list[FlowSpec]:
        c = self.ctx
        loads = c.virtual_loads if self.mode == "streaming-all" else None
        return virtualize_flows(c.flows, self.mode, loads, c.rate_mode)

    def prepare(self, rng, initial_backlogs=None) -> None:
        c = self.ctx
        vs = VirtualPlaneState.empty(c.g)
        self.ph = run_virtual_spbp(c.g, c.cg, c.bias, self.virtual_flows(), c.virtual_steps, c.rates, rng,
                                   initial_backlogs=initial_backlogs, epsilon=c.epsilon,
                                   scheduler=c.scheduler, state=vs)
        self.virtual_exchanges += vs.exchanges
        self.refresh_policy()


class AntBPMirrorRouter(AntBPRouter):
    kind = PolicyKind.ANTBP_MIRROR
    mode = "mirror"


class AntBPNoVirtRouter(AntBPRouter):
    kind = PolicyKind.ANTBP_NOVIRT
    virtual_update = False


class SpBpRouter(Router):
    kind = PolicyKind.SPBP
    uses_pheromone = False

    def __init__(self, ctx, params=SchemeParams()):
        super().__init__(ctx, params)
        self.plane = SpBpPlane(ctx.g)

    def prepare(self, rng, initial_backlogs=None) -> None:
        pass

    def refresh_policy(self) -> None:
        pass

    def step(self, t, events, rdot, rng, failed=None) -> SlotReport:
        rep, _ = self.plane.step(t, events, rdot, self.ctx.cg, self.ctx.grad, self.ctx.scheduler,
                                 failed, self.ctx.bias)
        return rep


class AntBaselineRouter(Router):
    kind = PolicyKind.ANT_BASELINE
    virtual_update = True

    def prepare(self, rng, initial_backlogs=None) -> None:
        c = self.ctx
        vflows = virtualize_flows(c.flows, "streaming-all", c.virtual_loads, c.rate_mode)
        events = []
        if initial_backlogs is not None:
            nz = np.argwhere(np.asarray(initial_backlogs) > 0)
            events = [ArrivalEvent(0, int(i), int(k), int(initial_backlogs[i, k])) for i, k in nz if i != k]
        self.ph, dp = run_virtual_aco(c.g, c.cg, c.bias, vflows, c.virtual_steps, c.rates, rng, self.params,
                                      c.scheduler, initial_events=events)
        self.ants_emitted += dp.injected
        self.refresh_policy()

    def refresh_policy(self) -> None:
        self.policy = aco_bias_policy(self.ph, self.ctx.bias, self.ctx.g, self.params.floor, self.ctx.grad)


class AntIdealRouter(AntBaselineRouter):
    kind = PolicyKind.ANT_IDEAL

    def __init__(self, ctx, params=SchemeParams()):
        super().__init__(ctx, params)
        self.colony = AntColony(ctx.flows, ctx.g.n_nodes, params)

    def on_injections(self, per_flow, t: int) -> None:
        self.ants_emitted += self.colony.observe_injections(per_flow, t)

    def after_slot(self, t: int, rng) -> None:
        ant_ideal_step(self.colony, self.ph, self.policy, rng, t, self.ctx.g)
        self.refresh_policy()


ROUTERS = {
    PolicyKind.ANTBP: AntBPRouter,
    PolicyKind.ANTBP_MIRROR: AntBPMirrorRouter,
    PolicyKind.ANTBP_NOVIRT: AntBPNoVirtRouter,
    PolicyKind.SPBP: SpBpRouter,
    PolicyKind.ANT_BASELINE: AntBaselineRouter,
    PolicyKind.ANT_IDEAL: AntIdealRouter,
}


def make_router(kind, ctx: RoutingContext, params: SchemeParams = SchemeParams()) -> Router:
    return ROUTERS[PolicyKind(kind)](ctx, params)


def antbp_prepare(ctx: RoutingContext, rng: np.random.Generator, initial_backlogs=None) -> ForwardingPolicy:
    r = AntBPRouter(ctx)
    r.prepare(rng, initial_backlogs)
    return r.policy


def antbp_mirror_prepare(ctx: RoutingContext, rng: np.random.Generator, initial_backlogs=None) -> ForwardingPolicy:
    r = AntBPMirrorRouter(ctx)
    r.prepare(rng, initial_backlogs)
    return r.policy
