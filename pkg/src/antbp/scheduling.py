"""MaxWeight link scheduling on the conflict graph.

Schedules are boolean arrays over directed links. Links with zero utility
are never activated. Ties are broken in favor of the lower link index.
"""

from __future__ import annotations

import numpy as np

from .topology import ConflictGraph

_NO_RANK = np.iinfo(np.int64).max


def _priority(u: np.ndarray, cand: np.ndarray) -> np.ndarray:
    """Rank candidates by descending utility, lower index first on ties."""
    return cand[np.lexsort((cand, -u[cand]))]


def lgs_schedule(cg: ConflictGraph, u) -> np.ndarray:
    """Local greedy scheduler, run as synchronous rounds.

    In each round an undecided link activates when it beats every undecided
    conflicting neighbor; the neighbors of winners drop out.
    """
    u = np.asarray(u, dtype=float)
    n = cg.n_links
    active = np.zeros(n + 1, dtype=bool)
    cand = np.flatnonzero(u > 0)
    if cand.size == 0:
        return active[:n]
    rank = np.full(n + 1, _NO_RANK, dtype=np.int64)
    rank[_priority(u, cand)] = np.arange(cand.size)
    undecided = np.zeros(n + 1, dtype=bool)
    undecided[cand] = True
    nbr = cg.nbr[cand]
    while cand.size:
        best_nb = np.where(undecided[nbr], rank[nbr], _NO_RANK).min(axis=1)
        won = rank[cand] < best_nb
        winners = cand[won]
        active[winners] = True
        undecided[winners] = False
        undecided[cg.nbr[winners].ravel()] = False
        keep = undecided[cand]
        cand, nbr = cand[keep], nbr[keep]
    return active[:n]


def greedy_schedule(cg: ConflictGraph, u) -> np.ndarray:
    """Centralized greedy maximal scheduler."""
    u = np.asarray(u, dtype=float)
    n = cg.n_links
    active = np.zeros(n + 1, dtype=bool)
    blocked = np.zeros(n + 1, dtype=bool)
    for e in _priority(u, np.flatnonzero(u > 0)).tolist():
        if not blocked[e]:
            active[e] = True
            blocked[cg.nbr[e]] = True
    return active[:n]


def exact_mwis(cg: ConflictGraph, u, max_vertices: int = 24) -> np.ndarray:
    """Exact maximum-weight independent set by branch and bound.

    Among optimal sets the one whose sorted index list is lexicographically
    smallest is returned. Only meant as a test oracle.
    """
    n = cg.n_links
    if n > max_vertices:
        raise ValueError(f"exact_mwis is capped at {max_vertices} vertices, got {n}")
    u = np.asarray(u, dtype=float)
    verts = [e for e in range(n) if u[e] > 0]
    w = [float(u[e]) for e in verts]
    nbmask = {e: sum(1 << int(x) for x in cg.neighbors(e)) for e in verts}
    suffix = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]]).tolist()
    best = [0.0, 0]

    def dfs(k: int, chosen: int, blocked: int, weight: float) -> None:
        if weight > best[0]:
            best[0], best[1] = weight, chosen
        if k == len(verts) or weight + suffix[k] <= best[0]:
            return
        v = verts[k]
        if not (blocked >> v) & 1:
            dfs(k + 1, chosen | (1 << v), blocked | nbmask[v], weight + w[k])
        dfs(k + 1, chosen, blocked, weight)

    dfs(0, 0, 0, 0.0)
    return np.array([(best[1] >> e) & 1 for e in range(n)], dtype=bool)


def is_independent(cg: ConflictGraph, s) -> bool:
    s = np.asarray(s, dtype=bool)
    if len(cg.edges) == 0:
        return True
    return not np.any(s[cg.edges[:, 0]] & s[cg.edges[:, 1]])


def is_maximal(cg: ConflictGraph, u, s) -> bool:
    """Every inactive positive-utility link has an active conflicting neighbor."""
    u = np.asarray(u, dtype=float)
    s = np.append(np.asarray(s, dtype=bool), False)
    covered = s[cg.nbr].any(axis=1)
    idle = ~s[:-1] & (u > 0)
    return not np.any(idle & ~covered)


def schedule_weight(u, s) -> float:
    return float(np.asarray(u, dtype=float)[np.asarray(s, dtype=bool)].sum())
