"""Flow sets and Poisson packet arrivals."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .topology import NetworkGraph

STREAMING = "streaming"
BURSTY = "bursty"


@dataclass(frozen=True)
class FlowSpec:
    src: int
    dst: int
    kind: str
    base_rate: float
    load: float = 1.0
    burst_start: int = 0
    burst_len: int = 30

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError("flow source and destination must differ")
        if self.kind not in (STREAMING, BURSTY):
            raise ValueError(f"unknown flow kind {self.kind!r}")

    @property
    def rate(self) -> float:
        return self.load * self.base_rate

    def active(self, t: int) -> bool:
        if self.kind == STREAMING:
            return True
        return self.burst_start <= t < self.burst_start + self.burst_len

    def active_slots(self, horizon: int) -> int:
        if self.kind == STREAMING:
            return horizon
        return max(0, min(horizon, self.burst_start + self.burst_len) - max(0, self.burst_start))


def flow_count_range(n_nodes: int, low_frac: float = 0.15, high_frac: float = 0.30) -> tuple[int, int]:
    return math.floor(low_frac * n_nodes), math.ceil(high_frac * n_nodes)


def sample_flows(g: NetworkGraph, p_bursty: float, rng: np.random.Generator, horizon: int = 1000,
                 load_streaming: float = 1.0, load_bursty: float = 1.0, burst_len: int = 30,
                 burst_margin: int = 100, rate_range=(0.2, 1.0), count_fracs=(0.15, 0.30)) -> list[FlowSpec]:
    """Draw a random flow set over the nodes of ``g``.

    Each (src, dst) pair appears at most once; nodes may host several flows.
    """
    n = g.n_nodes
    if n < 2:
        raise ValueError("need at least two nodes")
    lo, hi = flow_count_range(n, *count_fracs)
    count = min(int(rng.integers(lo, hi + 1)), n * (n - 1))
    picks = rng.choice(n * (n - 1), size=count, replace=False)
    flows = []
    for k in picks.tolist():
        src, off = divmod(k, n - 1)
        dst = off if off < src else off + 1
        base = float(rng.uniform(*rate_range))
        bursty = bool(rng.random() < p_bursty)
        start = int(rng.integers(0, max(horizon - burst_margin, 0) + 1))
        if bursty:
            flows.append(FlowSpec(src, dst, BURSTY, base, load_bursty, start, burst_len))
        else:
            flows.append(FlowSpec(src, dst, STREAMING, base, load_streaming, 0, burst_len))
    return flows


def arrivals_at(f: FlowSpec, t: int, rng: np.random.Generator) -> int:
    if not f.active(t) or f.rate <= 0:
        return 0
    return int(rng.poisson(f.rate))


def arrival_matrix(flows: list[FlowSpec], horizon: int, rng: np.random.Generator) -> np.ndarray:
    """Per-flow, per-slot arrival counts, shape (flows, horizon)."""
    out = np.zeros((len(flows), horizon), dtype=np.int64)
    for k, f in enumerate(flows):
        if f.rate <= 0:
            continue
        if f.kind == STREAMING:
            out[k] = rng.poisson(f.rate, size=horizon)
        else:
            a, b = max(0, f.burst_start), min(horizon, f.burst_start + f.burst_len)
            if b > a:
                out[k, a:b] = rng.poisson(f.rate, size=b - a)
    return out


def virtualize_flows(flows: list[FlowSpec], mode: str = "streaming-all",
                     virtual_loads: tuple[float, float] | None = None,
                     rate_mode: str = "own") -> list[FlowSpec]:
    """Map physical flows onto the virtual plane.

    ``streaming-all`` turns every flow into a persistent stream at the
    streaming load; ``mirror`` keeps each flow's kind and moves bursts to
    slot 0. ``virtual_loads`` is ``(L_s, L_b)``; ``None`` keeps each flow's
    own physical load. With ``rate_mode="common"`` every streamed flow uses the mean base
    rate of the set instead of its own.
    """
    if mode not in ("streaming-all", "mirror"):
        raise ValueError(f"unknown virtualization mode {mode!r}")
    if not flows:
        return []
    common = float(np.mean([f.base_rate for f in flows]))
    out = []
    for f in flows:
        if mode == "mirror":
            if virtual_loads is None:
                load = f.load
            else:
                load = virtual_loads[0] if f.kind == STREAMING else virtual_loads[1]
            out.append(replace(f, load=load, burst_start=0))
            continue
        load = virtual_loads[0] if virtual_loads is not None else f.load
        base = common if rate_mode == "common" else f.base_rate
        out.append(replace(f, kind=STREAMING, base_rate=base, load=load, burst_start=0))
    return out
