"""Labeled random streams derived from a single master seed.

Every stochastic concern of a run (topology, flows, arrivals, link rates,
forwarding, failures, mobility, virtual plane) draws from its own stream so
that swapping the routing scheme never perturbs the environment.
"""

import zlib

import numpy as np

STREAMS = (
    "topology",
    "flows",
    "arrivals",
    "rates",
    "forwarding",
    "failures",
    "mobility",
    "virtual",
    "ants",
)


def stream(seed: int, label: str, *extra: int) -> np.random.Generator:
    """Return an independent generator for ``label`` under master ``seed``."""
    key = [int(seed) & 0xFFFFFFFF, zlib.crc32(label.encode("utf-8"))]
    key.extend(int(x) & 0xFFFFFFFF for x in extra)
    return np.random.default_rng(np.random.SeedSequence(key))
