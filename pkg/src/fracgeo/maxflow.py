"""
Highest-label push-relabel max-flow on a dense capacity matrix.

Only the first phase is run: it yields the maximum flow value into the sink
and a minimum cut. Nodes whose label reaches ``n`` cannot send flow to the
sink any more and simply stay on the source side. Discharges are vectorized
over all active nodes sharing the highest label.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class FlowResult:
    value: float
    source_side: np.ndarray  # bool per node, True for the source side of a min cut
    residual: np.ndarray
    pushes: int
    relabels: int


def _distance_to_sink(R: np.ndarray, sink: int, tol: float, cap: int) -> np.ndarray:
    """Breadth-first residual distances to ``sink``; unreachable nodes get ``cap``."""
    n = R.shape[0]
    dist = np.full(n, cap, dtype=np.int64)
    dist[sink] = 0
    seen = np.zeros(n, dtype=bool)
    seen[sink] = True
    frontier = np.array([sink])
    level = 0
    while frontier.size:
        level += 1
        reach = (R[:, frontier] > tol).any(axis=1) & ~seen
        frontier = np.flatnonzero(reach)
        seen[frontier] = True
        dist[frontier] = level
    return dist


def max_flow(capacity: np.ndarray, source: int, sink: int,
             rtol: float = 1e-13) -> FlowResult:
    """Maximum ``source``-``sink`` flow for a dense non-negative capacity matrix.

    Residual capacities and excesses at or below ``rtol * max(capacity)`` are
    treated as zero, which keeps round-off from spawning spurious arcs.
    """
    C = np.array(capacity, dtype=float)
    n = C.shape[0]
    if C.shape != (n, n) or np.any(C < 0):
        raise ValueError("capacity must be a square non-negative matrix")
    if source == sink:
        raise ValueError("source and sink coincide")
    np.fill_diagonal(C, 0.0)
    tol = rtol * max(float(C.max(initial=0.0)), np.finfo(float).tiny)

    R = C
    excess = np.zeros(n)
    excess[:] = R[source]
    R[:, source] += R[source]
    R[source] = 0.0
    excess[source] = 0.0

    height = _distance_to_sink(R, sink, tol, n)
    height[source] = n
    relabels = pushes = 0
    since_global = 0
    terminal = np.zeros(n, dtype=bool)
    terminal[[source, sink]] = True

    while True:
        active = (excess > tol) & (height < n) & ~terminal
        if not active.any():
            break
        top = height[active].max()
        A = np.flatnonzero(active & (height == top))
        # every node of A pushes at once; arcs (u, v) with u in A, v one label
        # lower are disjoint, so the greedy row allocations do not interact
        rows = R[A]
        caps = np.where((rows > tol) & (height == top - 1)[None, :], rows, 0.0)
        before = np.cumsum(caps, axis=1) - caps
        send = np.clip(excess[A, None] - before, 0.0, caps)
        moved = send.sum(axis=1)
        if moved.any():
            R[A] = rows - send
            R[:, A] += send.T
            excess += send.sum(axis=0)
            pushes += int(np.count_nonzero(send))
        exhausted = moved >= excess[A]
        excess[A] = np.where(exhausted, 0.0, excess[A] - moved)

        stuck = A[excess[A] > tol]
        if stuck.size:
            # all admissible arcs of a stuck node are saturated: raise its label
            resid = R[stuck] > tol
            lifted = np.where(resid, height[None, :], n - 1).min(axis=1) + 1
            lifted[~resid.any(axis=1)] = n
            height[stuck] = np.minimum(lifted, n)
            relabels += stuck.size
            since_global += stuck.size
        if since_global >= n:
            height = _distance_to_sink(R, sink, tol, n)
            height[source] = n
            since_global = 0

    source_side = _distance_to_sink(R, sink, tol, n) >= n
    return FlowResult(float(excess[sink]), source_side, R, pushes, relabels)
