import numpy as np
import pytest

from antbp.rng import stream
from antbp.topology import generate_topology
from antbp.traffic import (
    BURSTY,
    STREAMING,
    FlowSpec,
    arrival_matrix,
    arrivals_at,
    flow_count_range,
    sample_flows,
    virtualize_flows,
)


@pytest.fixture(scope="module")
def g100():
    return generate_topology(100, seed=0)


def test_flow_count_range_100(g100):
    assert flow_count_range(100) == (15, 30)
    for s in range(30):
        assert 15 <= len(sample_flows(g100, 0.5, stream(s, "flows"))) <= 30


def test_flow_invariants(g100):
    for s in range(20):
        flows = sample_flows(g100, 0.5, stream(s, "flows"), horizon=1000)
        pairs = [(f.src, f.dst) for f in flows]
        assert len(set(pairs)) == len(pairs)
        for f in flows:
            assert f.src != f.dst
            assert 0.2 <= f.base_rate <= 1.0
            if f.kind == BURSTY:
                assert 0 <= f.burst_start and f.burst_start + f.burst_len <= 1000


def test_p_bursty_extremes(g100):
    assert all(f.kind == STREAMING for s in range(10) for f in sample_flows(g100, 0.0, stream(s, "flows")))
    kinds = [f.kind for s in range(50) for f in sample_flows(g100, 1.0, stream(s, "flows"))]
    assert len(kinds) >= 1000 and all(k == BURSTY for k in kinds)


def test_flow_sampling_deterministic(g100):
    assert sample_flows(g100, 0.5, stream(3, "flows")) == sample_flows(g100, 0.5, stream(3, "flows"))


def test_bad_flows():
    with pytest.raises(ValueError):
        FlowSpec(1, 1, STREAMING, 0.5)
    with pytest.raises(ValueError):
        FlowSpec(1, 2, "periodic", 0.5)


def test_arrivals_outside_window_and_zero_rate(rng):
    f = FlowSpec(0, 1, BURSTY, 0.5, 10.0, burst_start=100, burst_len=30)
    assert all(arrivals_at(f, t, rng) == 0 for t in list(range(100)) + list(range(130, 300)))
    z = FlowSpec(0, 1, STREAMING, 0.0)
    assert all(arrivals_at(z, t, rng) == 0 for t in range(100))


def test_arrival_mean_law_of_large_numbers():
    f = FlowSpec(0, 1, STREAMING, 1.0, 2.0)
    x = arrival_matrix([f], 100_000, np.random.default_rng(7))[0]
    assert x.mean() == pytest.approx(2.0, abs=0.02)


def test_expected_injection_total_within_three_sigma():
    flows = [FlowSpec(0, 1, STREAMING, 0.4, 1.5), FlowSpec(2, 3, BURSTY, 0.7, 3.0, burst_start=50, burst_len=30)]
    T = 200
    totals = np.array([arrival_matrix(flows, T, stream(s, "arrivals")).sum(axis=1) for s in range(100)])
    for k, f in enumerate(flows):
        mu = f.active_slots(T) * f.rate
        sigma = np.sqrt(mu / 100)
        assert abs(totals[:, k].mean() - mu) <= 3 * sigma


def test_arrival_matrix_window_only():
    f = FlowSpec(0, 1, BURSTY, 1.0, 5.0, burst_start=10, burst_len=5)
    a = arrival_matrix([f], 40, np.random.default_rng(0))[0]
    assert a[:10].sum() == 0 and a[15:].sum() == 0 and a[10:15].sum() > 0


def test_virtualize_mirror_on_streaming():
    f = FlowSpec(0, 1, STREAMING, 0.3, 2.0)
    assert virtualize_flows([f], "mirror") == [f]


def test_virtualize_streaming_all_bursty():
    f = FlowSpec(0, 1, BURSTY, 0.5, 10.0, burst_start=400)
    (v,) = virtualize_flows([f], "streaming-all", (2.0, 10.0))
    assert v.kind == STREAMING and v.rate == pytest.approx(1.0, abs=1e-12)
    assert v.active(0) and v.active(999)


def test_virtualize_mirror_bursty():
    f = FlowSpec(0, 1, BURSTY, 0.5, 10.0, burst_start=400, burst_len=30)
    (v,) = virtualize_flows([f], "mirror")
    assert v.burst_start == 0 and v.burst_len == 30 and v.rate == f.rate and v.kind == BURSTY


def test_virtualize_common_rate_and_errors():
    flows = [FlowSpec(0, 1, STREAMING, 0.2), FlowSpec(1, 2, BURSTY, 0.6)]
    vs = virtualize_flows(flows, "streaming-all", (1.0, 1.0), rate_mode="common")
    assert [v.base_rate for v in vs] == [pytest.approx(0.4)] * 2
    assert virtualize_flows([], "mirror") == []
    with pytest.raises(ValueError):
        virtualize_flows(flows, "bogus")
