"""Count-only virtual SP-BP and the pheromone field it leaves behind.

Virtual queues hold per-(node, commodity) packet counts. Each virtual step
injects Poisson arrivals, picks the commodity with the largest biased
pressure on every link, schedules links with the local greedy scheduler and
moves counts. Net directional crossings become pheromone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataplane import ForwardingPolicy, InvariantViolation
from .scheduling import is_independent, lgs_schedule
from .topology import BiasField, ConflictGraph, LinkRateModel, NetworkGraph
from .traffic import FlowSpec


@dataclass(eq=False)
class VirtualPlaneState:
    vq: np.ndarray
    crossings: np.ndarray
    step: int = 0
    injected: int = 0
    consumed: int = 0
    exchanges: int = 0

    @classmethod
    def empty(cls, g: NetworkGraph, n_commodities: int | None = None) -> "VirtualPlaneState":
        c = g.n_nodes if n_commodities is None else n_commodities
        return cls(vq=np.zeros((g.n_nodes, c), dtype=np.int64),
                   crossings=np.zeros((g.n_links, c), dtype=float))


@dataclass(eq=False)
class PheromoneField:
    rho: np.ndarray
    epsilon: float = 0.01

    def copy(self) -> "PheromoneField":
        return PheromoneField(self.rho.copy(), self.epsilon)


@dataclass(eq=False)
class BackpressureDecision:
    """Per-link outcome of one biased-backpressure step."""

    commodity: np.ndarray
    weight: np.ndarray
    utility: np.ndarray
    schedule: np.ndarray
    moved: np.ndarray


def biased_pressure(q: np.ndarray, grad: np.ndarray, g: NetworkGraph) -> np.ndarray:
    """Biased pressure of every commodity on every link, shape (links, commodities)."""
    return (q[g.src] - q[g.dst]) + grad


def select_commodities(q: np.ndarray, grad: np.ndarray, g: NetworkGraph) -> tuple[np.ndarray, np.ndarray]:
    """Best commodity per link and its pressure; ties go to the smaller index."""
    p = biased_pressure(q, grad, g)
    best = p.argmax(axis=1)
    return best, p[np.arange(g.n_links), best]


def select_commodity(vstate: VirtualPlaneState, bias: BiasField, g: NetworkGraph, link: int) -> int:
    i, j = int(g.src[link]), int(g.dst[link])
    u_i = vstate.vq[i] + bias.bias[i]
    u_j = vstate.vq[j] + bias.bias[j]
    return int(np.argmax(u_i - u_j))


def link_weights(q: np.ndarray, g: NetworkGraph, commodity: np.ndarray, pressure: np.ndarray) -> np.ndarray:
    """max(pressure, 0), zeroed where the chosen commodity has no backlog at the sender."""
    backlogged = q[g.src, commodity] > 0
    return np.where(backlogged, np.maximum(pressure, 0.0), 0.0)


def virtual_utilities(vstate: VirtualPlaneState, bias: BiasField, g: NetworkGraph, rdot,
                      grad: np.ndarray | None = None):
    """Link utilities r_ij * w_ij; also returns the commodity choice and weights."""
    grad = bias.gradient(g) if grad is None else grad
    c, p = select_commodities(vstate.vq, grad, g)
    w = link_weights(vstate.vq, g, c, p)
    return np.asarray(rdot) * w, c, w


def backpressure_decide(q, grad, g: NetworkGraph, cg: ConflictGraph, rdot, scheduler=lgs_schedule,
                        failed=None) -> BackpressureDecision:
    """Commodity choice, utilities, schedule and transmit counts for one step."""
    rdot = np.asarray(rdot)
    busy = q.sum(axis=1)[g.src] > 0
    commodity = np.zeros(g.n_links, dtype=np.int64)
    weight = np.zeros(g.n_links)
    if busy.any():
        idx = np.flatnonzero(busy)
        p = (q[g.src[idx]] - q[g.dst[idx]]) + grad[idx]
        best = p.argmax(axis=1)
        commodity[idx] = best
        weight[idx] = np.maximum(p[np.arange(len(idx)), best], 0.0)
    weight = np.where(q[g.src, commodity] > 0, weight, 0.0)
    utility = rdot * weight
    schedule = scheduler(cg, utility)
    go = schedule & (weight > 0)
    if failed is not None:
        go &= ~np.asarray(failed, dtype=bool)
    moved = np.where(go, np.minimum(q[g.src, commodity], rdot), 0).astype(np.int64)
    return BackpressureDecision(commodity, weight, utility, schedule, moved)


def virtual_transmit(vstate: VirtualPlaneState, g: NetworkGraph, moved, commodity,
                     evaporation: float = 0.0) -> np.ndarray:
    """Apply per-link moves of the selected commodity; returns mu[link, commodity]."""
    moved = np.asarray(moved, dtype=np.int64)
    mu = np.zeros_like(vstate.crossings)
    e = np.flatnonzero(moved > 0)
    c = np.asarray(commodity)[e]
    m = moved[e]
    mu[e, c] = m
    np.subtract.at(vstate.vq, (g.src[e], c), m)
    keep = g.dst[e] != c
    np.add.at(vstate.vq, (g.dst[e][keep], c[keep]), m[keep])
    vstate.consumed += int(m[~keep].sum())
    if evaporation:
        vstate.crossings *= 1.0 - evaporation
    vstate.crossings += mu
    return mu


def pheromone_from_counts(vstate: VirtualPlaneState, g: NetworkGraph, epsilon: float = 0.01) -> PheromoneField:
    n = vstate.crossings
    rho = np.maximum(n - n[g.reverse], 0.0) + epsilon
    return PheromoneField(rho, epsilon)


def policy_from_pheromone(ph: PheromoneField, g: NetworkGraph) -> ForwardingPolicy:
    return ForwardingPolicy.from_weights(g, ph.rho)


def virtual_arrivals(flows: list[FlowSpec], tau: int, rng: np.random.Generator) -> np.ndarray:
    rates = np.array([f.rate if f.active(tau) else 0.0 for f in flows])
    return rng.poisson(rates) if len(flows) else np.zeros(0, dtype=np.int64)


def run_virtual_spbp(g: NetworkGraph, cg: ConflictGraph, bias: BiasField, virtual_flows: list[FlowSpec],
                     steps: int, rates: LinkRateModel, rng: np.random.Generator,
                     initial_backlogs: np.ndarray | None = None, epsilon: float = 0.01,
                     evaporation: float = 0.0, scheduler=lgs_schedule, debug: bool = False,
                     state: VirtualPlaneState | None = None) -> PheromoneField:
    """Run ``steps`` virtual SP-BP steps and return the resulting pheromone field.

    Pass a fresh ``state`` to inspect the final virtual queues and counters.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    vs = state if state is not None else VirtualPlaneState.empty(g)
    if initial_backlogs is not None:
        vs.vq += np.asarray(initial_backlogs, dtype=np.int64)
        np.fill_diagonal(vs.vq, 0)
        vs.injected += int(vs.vq.sum())
    grad = bias.gradient(g)
    src = np.array([f.src for f in virtual_flows], dtype=np.int64)
    dst = np.array([f.dst for f in virtual_flows], dtype=np.int64)
    for tau in range(steps):
        a = virtual_arrivals(virtual_flows, tau, rng)
        if len(a):
            np.add.at(vs.vq, (src, dst), a)
            vs.injected += int(a.sum())
        rdot = rates.sample(rng)
        prev = vs.vq.copy() if debug else None
        d = backpressure_decide(vs.vq, grad, g, cg, rdot, scheduler)
        vs.exchanges += int(np.count_nonzero(vs.vq[g.src]))
        mu = virtual_transmit(vs, g, d.moved, d.commodity, evaporation)
        vs.step += 1
        if debug:
            _check_virtual(vs, g, cg, d, mu, prev, rdot)
    return pheromone_from_counts(vs, g, epsilon)


def _check_virtual(vs, g, cg, d, mu, prev, rdot) -> None:
    if not is_independent(cg, d.schedule):
        raise InvariantViolation("virtual schedule is not independent")
    if np.any(vs.vq < 0):
        raise InvariantViolation("negative virtual queue")
    if np.any(np.diag(vs.vq) != 0):
        raise InvariantViolation("destination holds its own commodity")
    if vs.injected != vs.consumed + int(vs.vq.sum()):
        raise InvariantViolation("virtual count conservation broken")
    if np.any(mu.sum(axis=1) > rdot):
        raise InvariantViolation("virtual capacity exceeded")
    out = np.zeros_like(prev)
    inc = np.zeros_like(prev)
    np.add.at(out, g.src, mu.astype(np.int64))
    np.add.at(inc, g.dst, mu.astype(np.int64))
    np.fill_diagonal(inc, 0)
    if np.any(out > prev):
        raise InvariantViolation("virtual transmission exceeds backlog")
    if not np.array_equal(vs.vq, prev - out + inc):
        raise InvariantViolation("virtual queue recursion violated")


def save_pheromone(path, ph: PheromoneField, g: NetworkGraph, min_rho: float | None = None) -> None:
    """CSV rows ``src,dst,commodity,rho``; entries at or below ``min_rho`` are skipped."""
    thr = ph.epsilon if min_rho is None else min_rho
    e, c = np.nonzero(ph.rho > thr)
    with open(path, "w") as fh:
        fh.write("src,dst,commodity,rho\n")
        for a, b in zip(e.tolist(), c.tolist()):
            fh.write(f"{g.src[a]},{g.dst[a]},{b},{ph.rho[a, b]:.6f}\n")
