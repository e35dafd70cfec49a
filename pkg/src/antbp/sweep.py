"""Cartesian sweeps over one config axis, policies and seeds."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor

from .config import ScenarioConfig
from .simulation import run_scenario

log = logging.getLogger(__name__)


def _cell(args) -> dict:
    cfg, axis, value, policy, seed = args
    row = {"value": value, "policy": policy, "seed": seed, "error": ""}
    try:
        over = {"policy.kind": policy}
        if axis:
            over[axis] = value
        m = run_scenario(cfg.replace(**over), seed).metrics
        row.update(m.scalars())
    except Exception as exc:  # a failed cell is reported, the sweep goes on
        log.warning("cell %s=%s policy=%s seed=%s failed: %s", axis, value, policy, seed, exc)
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def run_sweep(cfg: ScenarioConfig, axis: str | None, values, seeds, policies=None, workers: int = 1) -> list[dict]:
    """Run every (value, policy, seed) cell; rows come back in that nested order.

    All policies at a given seed share topology, flows and environment streams.
    """
    values = list(values)
    policies = [cfg.policy.kind] if not policies else list(policies)
    if axis and values:
        cfg.replace(**{axis: values[0]})  # rejects unknown axis names before any run
    elif not axis and not values:
        values = [""]
    cells = [(cfg, axis, v, p, s) for v in values for p in policies for s in seeds]
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(_cell, cells))
    return [_cell(c) for c in cells]
