import numpy as np
import pytest

from antbp.config import ScenarioConfig
from antbp.topology import LinkRateModel, NetworkGraph


def path_graph(n: int, spacing: float = 0.9) -> NetworkGraph:
    """Nodes on a line, only consecutive nodes within unit range."""
    pos = np.stack([np.arange(n) * spacing, np.zeros(n)], axis=1) + 0.5
    return NetworkGraph.from_positions(pos, n * spacing + 1.0)


def star_graph(leaves: int) -> NetworkGraph:
    ang = 2 * np.pi * np.arange(leaves) / leaves
    pos = np.vstack([[0.0, 0.0], np.stack([0.9 * np.cos(ang), 0.9 * np.sin(ang)], axis=1)]) + 1.0
    return NetworkGraph.from_positions(pos, 2.0)


def fixed_rates(g: NetworkGraph, values, noise_std: float = 0.0, halfwidth: float = 0.0) -> LinkRateModel:
    r = np.broadcast_to(np.asarray(values, dtype=float), (g.n_links,)).copy()
    return LinkRateModel(r, noise_std=noise_std, halfwidth=halfwidth, low=float(r.min()), high=float(r.max()))


def small_config(**over) -> ScenarioConfig:
    base = {"topology.n_nodes": 20, "traffic.horizon": 200, "policy.virtual_steps": 200,
            "replication.realizations": 1}
    base.update(over)
    return ScenarioConfig().replace(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_criterion(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
