"""One scenario run: environment realization, physical slots and metrics.

Randomness is split into labeled streams so that every routing scheme run on
the same (config, seed) sees the same topology, flows, arrivals, realized
link rates, failure masks and mobility. The topology stream is keyed by
``seed // realizations`` so consecutive seeds share a topology.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ScenarioConfig
from .dataplane import ArrivalEvent, SlotReport
from .dynamics import (
    FailureModel,
    adapt_after_mobility,
    failure_mask,
    make_failure_model,
    mobility_event,
)
from .invariants import check_policy, check_slot
from .policies import Router, RoutingContext, make_router
from .rng import stream
from .scheduling import greedy_schedule, lgs_schedule
from .topology import (
    LinkRateModel,
    NetworkGraph,
    build_conflict_graph,
    compute_bias_field,
    generate_topology,
    sample_link_rates,
)
from .traffic import BURSTY, STREAMING, FlowSpec, arrival_matrix, sample_flows

SCHEDULER_FUNCS = {"lgs": lgs_schedule, "greedy": greedy_schedule}


@dataclass(eq=False)
class Scenario:
    cfg: ScenarioConfig
    seed: int
    g: NetworkGraph
    rates: LinkRateModel
    flows: list[FlowSpec]
    arrivals: np.ndarray

    @property
    def topology_seed(self) -> int:
        return self.seed // self.cfg.replication.realizations


def build_scenario(cfg: ScenarioConfig, seed: int, flows: list[FlowSpec] | None = None,
                   g: NetworkGraph | None = None, rates: LinkRateModel | None = None) -> Scenario:
    """Draw topology, long-term rates, flows and arrivals; explicit arguments override draws."""
    tc, tr = cfg.topology, cfg.traffic
    topo_seed = seed // cfg.replication.realizations
    if g is None:
        g = generate_topology(tc.n_nodes, tc.density, seed=topo_seed, radius=tc.radius)
    if rates is None:
        rates = sample_link_rates(g, stream(topo_seed, "rates", 0), tc.rate_low, tc.rate_high,
                                  tc.rate_noise_std, tc.rate_halfwidth)
    if flows is None:
        flows = sample_flows(g, tr.p_bursty, stream(seed, "flows"), tr.horizon, tr.load_streaming,
                             tr.load_bursty, tr.burst_len, tr.burst_margin, (tr.rate_low, tr.rate_high),
                             (tr.flow_frac_low, tr.flow_frac_high))
    arrivals = arrival_matrix(flows, tr.horizon, stream(seed, "arrivals"))
    return Scenario(cfg, seed, g, rates, flows, arrivals)


def routing_context(sc: Scenario) -> RoutingContext:
    pc, tr = sc.cfg.policy, sc.cfg.traffic
    ls = tr.load_streaming if pc.virtual_load_streaming < 0 else pc.virtual_load_streaming
    lb = tr.load_bursty if pc.virtual_load_bursty < 0 else pc.virtual_load_bursty
    return RoutingContext(sc.g, build_conflict_graph(sc.g), compute_bias_field(sc.g, sc.rates), sc.rates,
                          sc.flows, pc.virtual_steps, pc.epsilon, (ls, lb), pc.rate_mode,
                          SCHEDULER_FUNCS[pc.scheduler])


# -- metrics -------------------------------------------------------------------


@dataclass(eq=False)
class ResidualReport:
    max_relative: float
    max_relative_nominal: float
    residual: np.ndarray
    skipped: bool = False
    reason: str = ""


@dataclass(eq=False)
class RunMetrics:
    policy: str
    seed: int
    horizon: int
    injected: int = 0
    delivered: int = 0
    injected_streaming: int = 0
    injected_bursty: int = 0
    delivered_streaming: int = 0
    delivered_bursty: int = 0
    latency: float = math.nan
    latency_streaming: float = math.nan
    latency_bursty: float = math.nan
    latency_delivered: float = math.nan
    goodput: float = 0.0
    final_backlog: int = 0
    backlog: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    routing_cost: np.ndarray = field(default_factory=lambda: np.zeros(0))
    net_flow: np.ndarray | None = None
    demand: np.ndarray | None = None
    demand_nominal: np.ndarray | None = None
    stable: bool = True
    virtual_exchanges: int = 0
    ants_emitted: int = 0
    mobility_removed: int = 0
    mobility_added: int = 0

    @property
    def delivery(self) -> float:
        return self.delivered / self.injected if self.injected else math.nan

    @property
    def delivery_streaming(self) -> float:
        return self.delivered_streaming / self.injected_streaming if self.injected_streaming else math.nan

    @property
    def delivery_bursty(self) -> float:
        return self.delivered_bursty / self.injected_bursty if self.injected_bursty else math.nan

    SCALARS = ("injected", "delivered", "delivery", "delivery_streaming", "delivery_bursty", "latency",
               "latency_streaming", "latency_bursty", "latency_delivered", "goodput", "final_backlog",
               "stable", "virtual_exchanges", "ants_emitted", "mobility_removed", "mobility_added")

    def scalars(self) -> dict:
        return {k: getattr(self, k) for k in self.SCALARS}


def packet_latencies(injected_at: np.ndarray, delivered_at: np.ndarray, horizon: int, mode: str = "cap") -> np.ndarray:
    """Latency per packet; undelivered packets count as T (cap) or T - injection slot (residency)."""
    lat = (delivered_at - injected_at).astype(float)
    undelivered = delivered_at < 0
    if mode == "cap":
        lat[undelivered] = horizon
    elif mode == "residency":
        lat[undelivered] = horizon - injected_at[undelivered]
    else:
        raise ValueError(f"unknown latency mode {mode!r}")
    return lat


def stability_ratio(backlog) -> float:
    """Mean backlog over the last quarter divided by the mean over the second quarter."""
    b = np.asarray(backlog, dtype=float)
    q = len(b) // 4
    if q == 0:
        return math.nan
    second = b[q:2 * q].mean()
    last = b[3 * q:].mean()
    if second == 0:
        return 0.0 if last == 0 else math.inf
    return float(last / second)


def _mean(x: np.ndarray) -> float:
    return float(x.mean()) if x.size else math.nan


def check_flow_conservation(m: RunMetrics, stable_only: bool = True) -> ResidualReport:
    """Incidence balance of time-averaged commodity flows against the demand vector.

    Residuals are normalized by each commodity's total demand rate; the
    reported value is the worst (node, commodity) entry. ``max_relative``
    uses realized arrivals, ``max_relative_nominal`` the configured rates.
    """
    if m.net_flow is None:
        return ResidualReport(math.nan, math.nan, np.zeros(0), True, "link flows unavailable")
    if stable_only and not m.stable:
        return ResidualReport(math.nan, math.nan, np.zeros(0), True, "run is not stable")

    def worst(demand):
        d = demand.copy()
        total = d.sum(axis=0)
        d[np.arange(len(d)), np.arange(len(d))] = -total
        res = m.net_flow - d
        cols = total > 0
        if not cols.any():
            return 0.0, res
        return float(np.max(np.abs(res[:, cols]) / total[cols])), res

    real, res = worst(m.demand)
    nominal, _ = worst(m.demand_nominal)
    return ResidualReport(real, nominal, res)


# -- the run -------------------------------------------------------------------


@dataclass(eq=False)
class RunResult:
    metrics: RunMetrics
    scenario: Scenario
    packets: dict[str, np.ndarray]
    slots: list[SlotReport]
    events: list[tuple]
    router: Router


def _events_at(flows: list[FlowSpec], arrivals: np.ndarray, t: int) -> list[ArrivalEvent]:
    col = arrivals[:, t]
    return [ArrivalEvent(t, flows[k].src, flows[k].dst, int(col[k]), k) for k in np.flatnonzero(col).tolist()]


def _link_name(g: NetworkGraph, e: int) -> str:
    return f"{int(g.src[e])}-{int(g.dst[e])}"


def run_scenario(cfg: ScenarioConfig, seed: int, scenario: Scenario | None = None, debug: bool | None = None) -> RunResult:
    sc = scenario if scenario is not None else build_scenario(cfg, seed)
    debug = cfg.output.debug if debug is None else debug
    T = cfg.traffic.horizon
    ctx = routing_context(sc)
    router = make_router(cfg.policy.kind, ctx, cfg.policy.scheme_params())
    rng_virtual = stream(seed, "virtual")
    router.prepare(rng_virtual)
    if debug:
        check_policy(router)

    rng_rates = stream(seed, "rates", 1)
    rng_new_rates = stream(seed, "rates", 2)
    rng_fwd = stream(seed, "forwarding")
    rng_ants = stream(seed, "ants")
    rng_fail = stream(seed, "failures", 1)
    rng_mob = stream(seed, "mobility")
    fc = cfg.failure
    fm: FailureModel | None = None
    if fc.kind != "none":
        fm = make_failure_model(sc.g, fc.kind, stream(seed, "failures", 0), fc.p_max, fc.mean_duration,
                                fc.duration_std, fc.top_frac, fc.hard_down)
    mc = cfg.mobility
    mobile = mc.mobile_nodes > 0

    m = RunMetrics(cfg.policy.kind, seed, T)
    g0 = sc.g
    flow_acc = np.zeros((g0.n_links, g0.n_nodes), dtype=np.int64)
    backlog = np.zeros(T, dtype=np.int64)
    cost = np.zeros(T)
    slots: list[SlotReport] = []
    events_log: list[tuple] = []
    paused_until = -1
    topology_changed = False

    for t in range(T):
        if mobile and t == mc.trigger:
            res = mobility_event(router.ctx.g, mc.model(), rng_mob)
            g_old, g_new = router.ctx.g, res.graph
            long_term = rng_new_rates.uniform(ctx.rates.low, ctx.rates.high, g_new.n_links)
            for e, key in enumerate(map(tuple, g_old.links.tolist())):
                f = g_new.link_index.get(key)
                if f is not None:
                    long_term[f] = router.ctx.rates.long_term[e]
            old = router.ctx.rates
            rates = LinkRateModel(long_term, old.noise_std, old.halfwidth, old.low, old.high)
            ctx = RoutingContext(g_new, build_conflict_graph(g_new), router.ctx.bias, rates, sc.flows,
                                 ctx.virtual_steps, ctx.epsilon, ctx.virtual_loads, ctx.rate_mode, ctx.scheduler)
            reverted = adapt_after_mobility(router, res, ctx)
            if fm is not None:
                fm.remap(g_old, g_new, rng_new_rates, fc.p_max)
            topology_changed = True
            m.mobility_removed, m.mobility_added = len(res.removed), len(res.added)
            for i in res.moved.tolist():
                x, y = g_new.positions[i]
                events_log.append((t, "node-moved", str(i), f"{x:.6f} {y:.6f}"))
            events_log += [(t, "link-removed", _link_name(g_old, e), "") for e in res.removed.tolist()]
            events_log += [(t, "link-added", _link_name(g_new, e), "") for e in res.added.tolist()]
            events_log.append((t, "packets-reverted", "-", str(reverted)))
        if mobile and t == mc.update and topology_changed:
            ctx = RoutingContext(router.ctx.g, router.ctx.cg, compute_bias_field(router.ctx.g, router.ctx.rates),
                                 router.ctx.rates, sc.flows, ctx.virtual_steps, ctx.epsilon, ctx.virtual_loads,
                                 ctx.rate_mode, ctx.scheduler)
            router.ctx = ctx
            if router.uses_pheromone and getattr(router, "virtual_update", False):
                router.prepare(rng_virtual, initial_backlogs=router.plane.backlog.copy())
                paused_until = mc.update + mc.pause
                events_log.append((t, "virtual-update", "-", f"pause until {paused_until}"))
            else:
                router.refresh_policy()
                events_log.append((t, "bias-update", "-", ""))

        g = router.ctx.g
        rdot = router.ctx.rates.sample(rng_rates)
        mask = failure_mask(fm, t, rng_fail) if fm is not None else None
        events = _events_at(sc.flows, sc.arrivals, t)
        router.on_injections(sc.arrivals[:, t], t)
        prev = router.plane.backlog.copy() if debug else None
        if t < paused_until:
            rep = SlotReport(t, paused=True)
            rep.injected = router.plane.inject(events, t)
            rep.backlog = router.plane.in_queue()
        else:
            rep = router.step(t, events, rdot, rng_fwd, mask)
            if len(rep.failed):
                router.on_failures(rep.failed)
                events_log += [(t, "link-failed", _link_name(g, e), "") for e in rep.failed.tolist()]
            router.after_slot(t, rng_ants)
        if debug:
            check_slot(router, rep, prev, events, rdot, g)
        if not topology_changed and len(rep.moves):
            np.add.at(flow_acc, (rep.moves[:, 0], rep.moves[:, 1]), rep.moves[:, 2])
        backlog[t] = rep.backlog
        cost[t] = rep.routing_cost
        rep.schedule = None
        slots.append(rep)

    plane = router.plane
    pk = plane.packets.arrays()
    kinds = np.array([f.kind == BURSTY for f in sc.flows], dtype=bool)
    bursty = kinds[pk["flow"]] if len(pk["flow"]) else np.zeros(0, dtype=bool)
    lat = packet_latencies(pk["injected_at"], pk["delivered_at"], T, cfg.output.latency_mode)
    done = pk["delivered_at"] >= 0
    m.injected, m.delivered = len(lat), int(done.sum())
    m.injected_bursty, m.injected_streaming = int(bursty.sum()), int((~bursty).sum())
    m.delivered_bursty, m.delivered_streaming = int((done & bursty).sum()), int((done & ~bursty).sum())
    m.latency, m.latency_bursty, m.latency_streaming = _mean(lat), _mean(lat[bursty]), _mean(lat[~bursty])
    m.latency_delivered = _mean(lat[done])
    m.goodput = m.delivered / T
    m.final_backlog = plane.in_queue()
    m.backlog, m.routing_cost = backlog, cost
    m.stable = m.final_backlog <= cfg.output.stability_threshold * max(m.injected, 1)
    m.virtual_exchanges, m.ants_emitted = router.virtual_exchanges, router.ants_emitted
    if not topology_changed:
        n = g0.n_nodes
        net = np.zeros((n, n))
        np.add.at(net, g0.src, flow_acc)
        np.subtract.at(net, g0.dst, flow_acc)
        net /= T
        dst = np.array([f.dst for f in sc.flows], dtype=np.int64)
        src = np.array([f.src for f in sc.flows], dtype=np.int64)
        demand = np.zeros((n, n))
        nominal = np.zeros((n, n))
        if len(sc.flows):
            np.add.at(demand, (src, dst), sc.arrivals.sum(axis=1) / T)
            np.add.at(nominal, (src, dst), [f.rate * f.active_slots(T) / T for f in sc.flows])
        m.net_flow, m.demand, m.demand_nominal = net, demand, nominal
    return RunResult(m, sc, pk, slots, events_log, router)
