"""Acceptance criteria 1-10, each at its stated tolerance and time budget.

Every simulation here runs in debug mode, so the per-slot invariant audit
(criterion 8) covers all acceptance runs. Each test records a PASS/FAIL line
that is repeated in the terminal summary.
"""

import itertools
import math
import time

import numpy as np
import pytest

from antbp import outputs
from antbp.config import ScenarioConfig
from antbp.dataplane import DataPlane, InvariantViolation
from antbp.dynamics import MobilityModel, mobility_event
from antbp.policies import AntPath, aco_bias_policy, aco_policy, aco_update
from antbp.rng import stream
from antbp.scheduling import exact_mwis, greedy_schedule, is_independent, is_maximal, lgs_schedule, schedule_weight
from antbp.simulation import check_flow_conservation, run_scenario
from antbp.topology import ConflictGraph, build_conflict_graph, generate_topology
from antbp.virtualplane import PheromoneField, VirtualPlaneState, pheromone_from_counts, policy_from_pheromone, virtual_utilities

from conftest import path_graph, record_criterion

pytestmark = pytest.mark.acceptance

SEEDS = list(range(10))
DESK = {"topology.n_nodes": 50, "replication.realizations": 1, "output.debug": True}
AUDITED: list[str] = []
VIOLATIONS: list[str] = []


def desk(**over) -> ScenarioConfig:
    return ScenarioConfig().replace(**{**DESK, **over})


def run_all(cfg: ScenarioConfig, kinds, seeds=SEEDS) -> dict[str, list]:
    out = {}
    for k in kinds:
        c = cfg.replace(**{"policy.kind": k})
        try:
            out[k] = [run_scenario(c, s).metrics for s in seeds]
        except InvariantViolation as exc:
            VIOLATIONS.append(f"{k}: {exc}")
            raise
        AUDITED.append(f"{k}x{len(seeds)}")
    return out


def mean(ms, attr) -> float:
    return float(np.mean([getattr(m, attr) for m in ms]))


def test_criterion_1_conflict_degree():
    t0 = time.perf_counter()
    degs = []
    for s in SEEDS:
        g = generate_topology(100, seed=s)
        degs.append(build_conflict_graph(g).mean_link_degree(g))
    elapsed = time.perf_counter() - t0
    d = float(np.mean(degs))
    ok = abs(d - 13.86) <= 1.5 and elapsed < 5
    record_criterion(1, ok, f"mean conflict degree {d:.3f} (target 13.86 +/- 1.5), {elapsed:.1f}s")
    assert ok


def test_criterion_2_link_removal():
    t0 = time.perf_counter()
    ratios = {}
    for m in (10, 60):
        r = []
        for s in SEEDS:
            g = generate_topology(100, seed=s)
            res = mobility_event(g, MobilityModel(mobile_nodes=m, walk_steps=1500), stream(s, "mobility"))
            r.append(res.removal_ratio(g))
        ratios[m] = float(np.mean(r))
    elapsed = time.perf_counter() - t0
    ok = abs(ratios[10] - 0.166) <= 0.08 and abs(ratios[60] - 0.804) <= 0.08 and elapsed < 30
    record_criterion(2, ok, f"removal {ratios[10]:.1%} (16.6%) and {ratios[60]:.1%} (80.4%), {elapsed:.1f}s")
    assert ok


def test_criterion_3_scheduler_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    violations = 0
    for _ in range(500):
        n = int(rng.integers(1, 21))
        pairs = [p for p in itertools.combinations(range(n), 2) if rng.random() < rng.uniform(0.05, 0.6)]
        cg = ConflictGraph.from_edges(n, pairs)
        u = np.where(rng.random(n) < 0.2, 0.0, rng.uniform(0, 100, n))
        best = schedule_weight(u, exact_mwis(cg, u))
        for s in (lgs_schedule(cg, u), greedy_schedule(cg, u)):
            w = schedule_weight(u, s)
            if not (is_independent(cg, s) and is_maximal(cg, u, s) and 0 <= w <= best + 1e-9):
                violations += 1
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < 60
    record_criterion(3, ok, f"{violations} violations over 500 graphs, {elapsed:.1f}s")
    assert ok


def test_criterion_4_flow_conservation():
    t0 = time.perf_counter()
    cfg = desk(**{"topology.n_nodes": 30, "traffic.p_bursty": 0.0, "traffic.load_streaming": 1.0})
    ms = run_all(cfg, ["antbp"])["antbp"]
    reports = [check_flow_conservation(m) for m in ms]
    skipped = sum(r.skipped for r in reports)
    res = float(np.mean([r.max_relative for r in reports if not r.skipped])) if skipped < len(reports) else math.nan
    elapsed = time.perf_counter() - t0
    ok = skipped == 0 and res <= 0.05 and elapsed < 120
    record_criterion(4, ok, f"mean max relative residual {res:.4f} (<= 0.05), {skipped} skipped, {elapsed:.1f}s")
    assert ok


def test_criterion_5_last_packet_trend():
    t0 = time.perf_counter()
    runs = run_all(desk(**{"traffic.load_streaming": 2.0, "traffic.load_bursty": 0.5}), ["antbp", "spbp"])
    elapsed = time.perf_counter() - t0
    da, ds = mean(runs["antbp"], "delivery_bursty"), mean(runs["spbp"], "delivery_bursty")
    la, ls = mean(runs["antbp"], "latency_bursty"), mean(runs["spbp"], "latency_bursty")
    ok = da > ds and la < ls and elapsed < 600
    record_criterion(5, ok, f"bursty delivery Ant-BP {da:.4f} vs SP-BP {ds:.4f}, bursty latency "
                            f"{la:.2f} vs {ls:.2f}, {elapsed:.0f}s")
    assert ok


def test_criterion_6_goodput_crossover():
    t0 = time.perf_counter()
    ratio = {}
    for load in (2.0, 8.0):
        runs = run_all(desk(**{"traffic.p_bursty": 0.0, "traffic.load_streaming": load}), ["antbp", "spbp"])
        ratio[load] = mean(runs["antbp"], "goodput") / mean(runs["spbp"], "goodput")
    elapsed = time.perf_counter() - t0
    ok = ratio[2.0] >= 0.95 and ratio[8.0] <= 1.0 and elapsed < 900
    record_criterion(6, ok, f"goodput ratio {ratio[2.0]:.4f} at L_s=2 (>= 0.95), {ratio[8.0]:.4f} at L_s=8 "
                            f"(<= 1), {elapsed:.0f}s")
    assert ok


def test_criterion_7_mobility_ablation():
    t0 = time.perf_counter()
    cfg = desk(**{"traffic.p_bursty": 0.0, "traffic.load_streaming": 0.5, "mobility.mobile_nodes": 30,
                  "output.latency_mode": "residency"})
    runs = run_all(cfg, ["antbp", "antbp-novirt"])
    elapsed = time.perf_counter() - t0
    la, ln = mean(runs["antbp"], "latency"), mean(runs["antbp-novirt"], "latency")
    factor = ln / la
    ok = factor >= 3 and elapsed < 900
    record_criterion(7, ok, f"latency Ant-BP {la:.2f} vs Ant-BP-novirt {ln:.2f}, factor {factor:.2f} (>= 3), "
                            f"{elapsed:.0f}s")
    assert ok


def test_criterion_8_invariants_in_debug_mode():
    """Debug runs raise on the first violated invariant; also audit the remaining schemes and dynamics."""
    extra = [
        desk(**{"policy.kind": k, "traffic.horizon": 300, "policy.virtual_steps": 300})
        for k in ("antbp-mirror", "ant-baseline", "ant-ideal")
    ] + [
        desk(**{"policy.kind": k, "failure.kind": f, "traffic.horizon": 300, "policy.virtual_steps": 300})
        for k, f in (("antbp", "bw-persist"), ("spbp", "all-links"), ("ant-ideal", "local-persist"))
    ]
    for cfg in extra:
        try:
            run_scenario(cfg, 0)
            AUDITED.append(f"{cfg.policy.kind}/{cfg.failure.kind}")
        except InvariantViolation as exc:
            VIOLATIONS.append(f"{cfg.policy.kind}/{cfg.failure.kind}: {exc}")
    ok = not VIOLATIONS
    record_criterion(8, ok, f"{len(AUDITED)} audited run groups, {len(VIOLATIONS)} violations")
    assert ok, VIOLATIONS


def test_criterion_9_determinism(tmp_path):
    cfg = desk(**{"traffic.horizon": 400, "policy.virtual_steps": 300, "failure.kind": "bw-persist",
                  "mobility.mobile_nodes": 10, "mobility.trigger": 150, "mobility.update": 250,
                  "output.debug": False})
    names = ("packets.csv", "slots.csv", "events.csv", "topology.txt", "manifest.json")
    diffs = []
    for kind in ("antbp", "spbp", "ant-ideal"):
        c = cfg.replace(**{"policy.kind": kind})
        dirs = [outputs.emit_run(run_scenario(c, 7), c, tmp_path / f"{kind}-{k}") for k in range(2)]
        diffs += [f"{kind}/{n}" for n in names if (dirs[0] / n).read_bytes() != (dirs[1] / n).read_bytes()]
    ok = not diffs
    record_criterion(9, ok, "byte-identical outputs for 3 schemes" if ok else f"differs: {diffs}")
    assert ok


def test_criterion_10_formula_values():
    checks = {}
    # link utility: queue length times realized rate
    dp = DataPlane(path_graph(2))
    dp.qlen[:] = [4, 0]
    checks["utility"] = dp.compute_utilities([10, 10]).tolist() == [40, 0]
    # pheromone to policy normalization
    g = path_graph(3)
    rho = np.full((g.n_links, 3), 0.01)
    a, b = g.link_index[(1, 0)], g.link_index[(1, 2)]
    rho[a, 0], rho[b, 0] = 3.01, 1.01
    p = policy_from_pheromone(PheromoneField(rho), g).prob
    checks["policy"] = abs(p[a, 0] - 3.01 / 4.02) <= 1e-9 and abs(p[b, 0] - 1.01 / 4.02) <= 1e-9
    # virtual link utility r * max(pressure, 0) with backlog indicator
    g2 = path_graph(2)
    vs = VirtualPlaneState.empty(g2)
    vs.vq[0, 1] = 2
    grad = np.zeros((g2.n_links, 2))
    grad[g2.link_index[(0, 1)], 1] = 5.0
    u, _, _ = virtual_utilities(vs, None, g2, [10, 10], grad)
    checks["virtual utility"] = u[g2.link_index[(0, 1)]] == 70
    # pheromone from net crossings
    vs = VirtualPlaneState.empty(g2)
    vs.crossings[0, 1], vs.crossings[1, 1] = 7, 2
    ph = pheromone_from_counts(vs, g2, 0.01)
    checks["pheromone"] = abs(ph.rho[0, 1] - 5.01) <= 1e-9 and abs(ph.rho[1, 1] - 0.01) <= 1e-9
    # bias-augmented ACO with clamped numerators
    grad = np.zeros((g.n_links, 3))
    grad[a, 0], grad[b, 0] = 2.0, -2.0
    p = aco_bias_policy(PheromoneField(np.full((g.n_links, 3), 1.3)), None, g, 0.01, grad=grad).prob
    checks["bias aco"] = abs(p[a, 0] - 3.3 / 3.31) <= 1e-9 and abs(p[b, 0] - 0.01 / 3.31) <= 1e-9
    # classic ACO rule
    rho = np.ones((g.n_links, 3))
    rho[a, 2] = 2.0
    p = aco_policy(PheromoneField(rho), g, alpha=2.0).prob
    checks["aco rule"] = abs(p[a, 2] - 0.8) <= 1e-9 and abs(p[b, 2] - 0.2) <= 1e-9
    # ACO update: constant and inverse-latency deposits
    ph = PheromoneField(np.full((g.n_links, 3), 1.3))
    aco_update(ph, [AntPath(1, (g.link_index[(0, 1)],), 0, 3)], 0.002, "constant", 0.01)
    c1 = abs(ph.rho[g.link_index[(0, 1)], 1] - 1.3074) <= 1e-9
    ph = PheromoneField(np.zeros((g.n_links, 3)))
    aco_update(ph, [AntPath(2, (g.link_index[(0, 1)], b), 0, 20)], 0.0, "inverse-latency")
    checks["aco update"] = c1 and abs(ph.rho[b, 2] - 0.05) <= 1e-9
    bad = [k for k, v in checks.items() if not v]
    ok = not bad
    record_criterion(10, ok, f"{len(checks) - len(bad)}/{len(checks)} formula checks exact" +
                     (f", failed: {bad}" if bad else ""))
    assert ok
