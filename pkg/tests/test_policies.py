import numpy as np
import pytest

from antbp.dataplane import ArrivalEvent, ForwardingPolicy
from antbp.policies import (
    ROUTERS,
    AntColony,
    AntPath,
    PolicyKind,
    RoutingContext,
    SchemeParams,
    SpBpPlane,
    aco_bias_policy,
    aco_policy,
    aco_update,
    ant_ideal_step,
    antbp_mirror_prepare,
    antbp_prepare,
    decay_pheromone,
    make_router,
    run_virtual_aco,
    spbp_step,
)
from antbp.rng import stream
from antbp.simulation import build_scenario, routing_context
from antbp.topology import BiasField, build_conflict_graph, compute_bias_field
from antbp.traffic import BURSTY, STREAMING, FlowSpec
from antbp.virtualplane import PheromoneField

from conftest import fixed_rates, path_graph, small_config, star_graph


def test_params_defaults_and_validation():
    p = SchemeParams()
    assert (p.alpha, p.beta, p.evaporation, p.rho_init, p.floor, p.ant_interval, p.exploration) == \
        (1.0, 0.0, 0.002, 1.3, 0.01, 100, 0.1)
    for bad in ({"evaporation": 1.0}, {"exploration": 2.0}, {"ant_interval": 0}, {"floor": 0.0}):
        with pytest.raises(ValueError):
            SchemeParams(**bad)


def test_aco_uniform_and_alpha_two():
    g = path_graph(3)
    ph = PheromoneField(np.full((g.n_links, 3), 1.3))
    assert np.allclose(aco_policy(ph, g).prob, ForwardingPolicy.uniform(g).prob)
    rho = np.ones((g.n_links, 3))
    rho[g.link_index[(1, 0)], 2] = 2.0
    p = aco_policy(PheromoneField(rho), g, alpha=2.0).prob
    assert p[g.link_index[(1, 0)], 2] == pytest.approx(0.8, abs=1e-9)
    assert p[g.link_index[(1, 2)], 2] == pytest.approx(0.2, abs=1e-9)


def test_aco_heuristic_and_errors():
    g = path_graph(3)
    ph = PheromoneField(np.ones((g.n_links, 3)))
    h = np.ones(g.n_links)
    h[g.link_index[(1, 0)]] = 3.0
    p = aco_policy(ph, g, beta=1.0, heuristic=h).prob
    assert p[g.link_index[(1, 0)], 0] == pytest.approx(0.75, abs=1e-9)
    with pytest.raises(ValueError):
        aco_policy(ph, g, beta=1.0)
    with pytest.raises(ValueError):
        aco_policy(PheromoneField(np.zeros((g.n_links, 3))), g)


def test_aco_bias_policy_clamp():
    g = path_graph(3)
    ph = PheromoneField(np.full((g.n_links, 3), 1.3))
    grad = np.zeros((g.n_links, 3))
    a, b = g.link_index[(1, 0)], g.link_index[(1, 2)]
    grad[a, 0], grad[b, 0] = 2.0, -2.0
    p = aco_bias_policy(ph, None, g, 0.01, grad=grad).prob
    assert p[a, 0] == pytest.approx(3.3 / 3.31, abs=1e-9)
    assert p[b, 0] == pytest.approx(0.01 / 3.31, abs=1e-9)
    assert p[a, 0] == pytest.approx(0.997, abs=1e-3) and p[b, 0] == pytest.approx(0.003, abs=1e-3)
    assert p[g.link_index[(0, 1)], 0] == 1.0


def test_aco_bias_equal_gradients_uniform():
    g = star_graph(4)
    ph = PheromoneField(np.full((g.n_links, 5), 1.3))
    p = aco_bias_policy(ph, BiasField(np.zeros((5, 5)), np.ones(g.n_links)), g).prob
    assert np.allclose(p[g.out_links(0)], 0.25)


def test_aco_update_examples():
    g = path_graph(3)
    ph = PheromoneField(np.full((g.n_links, 3), 1.3))
    e = g.link_index[(0, 1)]
    aco_update(ph, [AntPath(1, (e,), 0, 3)], 0.002, "constant", 0.01)
    assert ph.rho[e, 1] == pytest.approx(1.3074, abs=1e-9)
    assert ph.rho[e, 0] == pytest.approx(1.3 * 0.998, abs=1e-12)
    ph = PheromoneField(np.full((g.n_links, 3), 1.3))
    aco_update(ph, [], 0.002)
    assert np.allclose(ph.rho, 1.3 * 0.998, atol=1e-12)
    ph = PheromoneField(np.zeros((g.n_links, 3)))
    path = (g.link_index[(0, 1)], g.link_index[(1, 2)])
    aco_update(ph, [AntPath(2, path, 5, 25)], 0.0, "inverse-latency")
    assert ph.rho[list(path), 2].tolist() == pytest.approx([0.05, 0.05], abs=1e-12)
    with pytest.raises(ValueError):
        aco_update(ph, [AntPath(2, path, 5, 25)], 0.0, "bogus")


def test_aco_update_floor_and_loop_deposit_once():
    g = path_graph(3)
    ph = PheromoneField(np.full((g.n_links, 3), 0.01))
    aco_update(ph, [], 0.5, floor=0.01)
    assert np.all(ph.rho == 0.01)
    a, b = g.link_index[(0, 1)], g.link_index[(1, 0)]
    c = g.link_index[(1, 2)]
    aco_update(ph, [AntPath(2, (a, b, a, c), 0, 4)], 0.0, "constant", 1.0)
    assert ph.rho[a, 2] == pytest.approx(1.01)


def test_ant_path_validity():
    g = path_graph(3)
    a, c = g.link_index[(0, 1)], g.link_index[(1, 2)]
    assert AntPath(2, (a, c), 0, 2).is_valid(g)
    assert not AntPath(2, (c, a), 0, 2).is_valid(g)
    assert not AntPath(1, (a, c), 0, 2).is_valid(g)
    assert AntPath(2, (a, c), 3, 9).latency == 6


def test_decay_on_failure():
    g = path_graph(2)
    ph = PheromoneField(np.full((g.n_links, 2), 2.0))
    decay_pheromone(ph, [0], 0.05)
    assert ph.rho[0].tolist() == pytest.approx([1.9, 1.9], abs=1e-12)
    assert ph.rho[1].tolist() == [2.0, 2.0]
    ph = PheromoneField(np.full((g.n_links, 2), 0.0101))
    decay_pheromone(ph, [0], 0.05)
    assert np.all(ph.rho[0] == 0.01)


def test_colony_emission_and_modal_path():
    g = path_graph(4)
    flows = [FlowSpec(0, 3, STREAMING, 1.0)]
    col = AntColony(flows, 4, SchemeParams(exploration=0.0))
    assert col.observe_injections([250], 0) == 2
    assert col.observe_injections([49], 1) == 0
    assert col.observe_injections([1], 2) == 1
    w = np.zeros((g.n_links, 4))
    for i in range(3):
        w[g.link_index[(i, i + 1)]] = 1.0
    w[g.link_index[(3, 2)]] = 1.0
    pol = ForwardingPolicy.from_weights(g, w)
    rng = np.random.default_rng(0)
    arrived = []
    for t in range(3):
        arrived += col.step(g, pol, rng, t)
    assert len(arrived) == 3
    fwd = tuple(g.link_index[(i, i + 1)] for i in range(3))
    assert all(a.links == fwd and a.is_valid(g) for a in arrived)


def test_colony_hop_cap_discards():
    g = path_graph(3)
    col = AntColony([FlowSpec(0, 2, STREAMING, 1.0)], 3, SchemeParams(exploration=0.0, hop_cap_factor=1))
    col.observe_injections([100], 0)
    w = np.ones((g.n_links, 3))
    w[g.link_index[(1, 2)], 2] = 0.0
    pol = ForwardingPolicy.from_weights(g, w)
    for t in range(5):
        col.step(g, pol, np.random.default_rng(t), t)
    assert col.discarded == 1 and not col.ants


def test_ant_ideal_step_updates_floor():
    g = path_graph(3)
    col = AntColony([FlowSpec(0, 2, STREAMING, 1.0)], 3, SchemeParams(exploration=0.0))
    col.observe_injections([100], 0)
    ph = PheromoneField(np.full((g.n_links, 3), 0.01))
    w = np.ones((g.n_links, 3))
    w[g.link_index[(1, 0)], 2] = 0.0
    pol = ForwardingPolicy.from_weights(g, w)
    arrived = []
    for t in range(2):
        arrived += ant_ideal_step(col, ph, pol, np.random.default_rng(t), t, g)
    assert len(arrived) == 1 and arrived[0].latency == 2
    assert ph.rho[g.link_index[(0, 1)], 2] == pytest.approx(0.01 * 0.998 + 0.5, abs=1e-9)
    assert np.all(ph.rho >= 0.01)


def two_node_spbp():
    g = path_graph(2)
    rates = fixed_rates(g, 10.0)
    return g, rates, compute_bias_field(g, rates), build_conflict_graph(g)


def test_spbp_two_node_latency_one():
    g, rates, bias, cg = two_node_spbp()
    plane = SpBpPlane(g)
    rng = np.random.default_rng(0)
    for t in range(100):
        spbp_step(plane, bias, cg, rates, rng, t, [ArrivalEvent(t, 0, 1, 1)])
    p = plane.packets.arrays()
    assert np.all(p["delivered_at"] - p["injected_at"] == 1)


def test_spbp_empty_queues():
    g, rates, bias, cg = two_node_spbp()
    rep = spbp_step(SpBpPlane(g), bias, cg, rates, np.random.default_rng(0), 0)
    assert rep.scheduled == 0 and len(rep.moves) == 0


def test_spbp_recursion_and_capacity():
    cfg = small_config(**{"policy.kind": "spbp"})
    sc = build_scenario(cfg, 3)
    ctx = routing_context(sc)
    plane = SpBpPlane(sc.g)
    rng = np.random.default_rng(0)
    g = sc.g
    for t in range(cfg.traffic.horizon):
        ev = [ArrivalEvent(t, f.src, f.dst, int(sc.arrivals[k, t]), k) for k, f in enumerate(sc.flows)
              if sc.arrivals[k, t]]
        prev = plane.backlog.copy()
        rdot = ctx.rates.sample(rng)
        rep, d = plane.step(t, ev, rdot, ctx.cg, ctx.grad)
        q = prev.copy()
        for e in ev:
            q[e.node, e.commodity] += e.count
        out = np.zeros_like(q)
        inn = np.zeros_like(q)
        for e, c, m in rep.moves.tolist():
            out[g.src[e], c] += m
            if g.dst[e] != c:
                inn[g.dst[e], c] += m
        assert np.all(out <= q)
        assert np.array_equal(plane.backlog, q - out + inn)
        assert np.all(d.moved <= rdot)
        assert np.array_equal(plane.backlog, plane.recount_backlog())


def streaming_ctx(p_bursty=0.0, seed=1):
    cfg = small_config(**{"traffic.p_bursty": p_bursty, "policy.virtual_steps": 300})
    return routing_context(build_scenario(cfg, seed))


def test_antbp_equals_mirror_on_streaming():
    ctx = streaming_ctx()
    a = antbp_prepare(ctx, stream(1, "virtual"))
    b = antbp_mirror_prepare(ctx, stream(1, "virtual"))
    assert np.array_equal(a.prob, b.prob)


def test_antbp_differs_from_mirror_on_bursty():
    ctx = streaming_ctx(p_bursty=1.0)
    a = antbp_prepare(ctx, stream(1, "virtual"))
    b = antbp_mirror_prepare(ctx, stream(1, "virtual"))
    assert not np.allclose(a.prob, b.prob)


def test_zero_flows_uniform_policy():
    ctx = streaming_ctx()
    ctx = RoutingContext(ctx.g, ctx.cg, ctx.bias, ctx.rates, [], 100)
    pol = antbp_prepare(ctx, np.random.default_rng(0))
    assert np.allclose(pol.prob, ForwardingPolicy.uniform(ctx.g).prob)


@pytest.mark.parametrize("kind", list(PolicyKind))
def test_every_router_yields_normalized_policy(kind):
    ctx = streaming_ctx(p_bursty=0.5)
    r = make_router(kind, ctx)
    r.prepare(np.random.default_rng(0))
    if r.uses_pheromone:
        r.policy.check()
        assert np.all(r.ph.rho >= r.ph.epsilon)
    assert set(ROUTERS) == set(PolicyKind)


def test_virtual_aco_runs_and_emits_ants():
    ctx = streaming_ctx()
    ph, dp = run_virtual_aco(ctx.g, ctx.cg, ctx.bias, ctx.flows, 100, ctx.rates, np.random.default_rng(0))
    assert dp.injected > 0 and dp.delivered > 0
    assert np.all(ph.rho >= 0.01)
