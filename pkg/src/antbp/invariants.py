"""Per-slot invariant audit used in debug mode."""

from __future__ import annotations

import numpy as np

from .dataplane import InvariantViolation, SlotReport
from .scheduling import is_independent


def expected_backlog(prev: np.ndarray, events, moves: np.ndarray, g) -> np.ndarray:
    """Q(t+1) = Q(t) - out + in + arrivals, destinations absorbing their own commodity."""
    q = prev.copy()
    for ev in events:
        if ev.node != ev.commodity:
            q[ev.node, ev.commodity] += ev.count
    if len(moves):
        e, c, cnt = moves[:, 0], moves[:, 1], moves[:, 2]
        np.subtract.at(q, (g.src[e], c), cnt)
        keep = g.dst[e] != c
        np.add.at(q, (g.dst[e][keep], c[keep]), cnt[keep])
    return q


def check_slot(router, rep: SlotReport, prev_backlog: np.ndarray, events, rdot, g) -> None:
    plane = router.plane
    if plane.injected != plane.delivered + plane.in_queue():
        raise InvariantViolation(f"slot {rep.t}: packet conservation broken")
    if np.any(plane.backlog < 0):
        raise InvariantViolation(f"slot {rep.t}: negative backlog")
    if not np.array_equal(plane.backlog, plane.recount_backlog()):
        raise InvariantViolation(f"slot {rep.t}: backlog matrix disagrees with queue contents")
    if not np.array_equal(plane.backlog, expected_backlog(prev_backlog, events, rep.moves, g)):
        raise InvariantViolation(f"slot {rep.t}: queue recursion violated")
    moves = rep.moves
    if len(moves):
        per_link = np.bincount(moves[:, 0], weights=moves[:, 2], minlength=g.n_links)
        if np.any(per_link > np.asarray(rdot)):
            raise InvariantViolation(f"slot {rep.t}: link capacity exceeded")
        if rep.schedule is not None and not rep.schedule[moves[:, 0]].all():
            raise InvariantViolation(f"slot {rep.t}: transmission on an unscheduled link")
        out = np.zeros_like(prev_backlog)
        np.add.at(out, (g.src[moves[:, 0]], moves[:, 1]), moves[:, 2])
        arrived = expected_backlog(prev_backlog, events, np.zeros((0, 3), dtype=np.int64), g)
        if np.any(out > arrived):
            raise InvariantViolation(f"slot {rep.t}: sent more than the backlog")
    if rep.schedule is not None and not is_independent(router.ctx.cg, rep.schedule):
        raise InvariantViolation(f"slot {rep.t}: schedule is not independent")
    check_policy(router)


def check_policy(router) -> None:
    if router.policy is not None:
        router.policy.check()
    ph = router.ph
    if ph is not None and np.any(ph.rho < ph.epsilon * (1 - 1e-12)):
        raise InvariantViolation("pheromone below its floor")
