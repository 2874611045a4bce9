"""
Discrete (delta, 1)-capacity.

Admissible fields equal 1 on K and 0 on the zero set (the boundary layer of
G, the grid version of compact support). Truncation to [0, 1] never raises
the energy, and by the discrete coarea identity the L^1 energy is an average
of indicator energies over thresholds, so the minimum is attained by an
indicator: capacity is a minimum s-t cut with edge capacities 2 w_ij.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, sparse
from scipy.optimize import linprog

from .functional import ScalarField, energy, perimeter, seminorm
from .grid import CellSet, GridDomain, ResourceLimitError
from .kernel import DENSE_CELL_LIMIT, KernelTable
from .maxflow import max_flow

LP_CELL_LIMIT = 512
PASS_SLACK = 1e-9


class Method(enum.Enum):
    MINCUT = "mincut"
    LP = "lp"
    COVERING = "covering"


def zero_layer(domain: GridDomain, width: int = 1) -> CellSet:
    """Boundary layer thickened to ``width`` cells (corner-connected)."""
    if width < 1:
        raise ValueError("zero layer width must be >= 1")
    layer = domain.boundary_layer
    if width > 1:
        layer = ndimage.binary_dilation(
            layer, structure=np.ones((3,) * domain.dim, bool), iterations=width - 1
        ) & domain.g_mask
    return CellSet(domain, layer)


def dilate_cells(A: CellSet, cells: int) -> np.ndarray:
    """Full-grid mask of A grown by ``cells`` layers (corner-connected)."""
    if cells <= 0:
        return A.mask.copy()
    return ndimage.binary_dilation(
        A.mask, structure=np.ones((3,) * A.domain.dim, bool), iterations=cells
    )


@dataclass(frozen=True, eq=False)
class CapacityProblem:
    domain: GridDomain
    kern: KernelTable
    K: CellSet
    zero_set: CellSet

    @classmethod
    def build(cls, kern: KernelTable, K: CellSet, zero_width: int = 1) -> CapacityProblem:
        return cls(kern.domain, kern, K, zero_layer(kern.domain, zero_width))

    def with_K(self, K: CellSet) -> CapacityProblem:
        return CapacityProblem(self.domain, self.kern, K, self.zero_set)

    @property
    def feasible(self) -> bool:
        return not np.any(self.K.mask & self.zero_set.mask)

    @property
    def free(self) -> np.ndarray:
        """G-order indices of cells that are neither forced to 1 nor to 0."""
        return np.flatnonzero(~self.K.g_vector & ~self.zero_set.g_vector)


@dataclass(frozen=True, eq=False)
class CapacityResult:
    value: float
    minimizer: CellSet | None
    method: Method
    certificate: ScalarField | None = None
    infeasible: bool = False
    flow_value: float | None = None


@dataclass(frozen=True, eq=False)
class CoveringCertificate(CapacityResult):
    """Energy of the cover field split as cross term (D against G \\ D) plus the
    remainder from pairs outside D; the cross term never exceeds 2 P(D)."""

    cross_term: float = 0.0
    remainder: float = 0.0
    two_perimeter: float = 0.0
    boundary_radius: float = 0.0
    n_balls: int = 0


def _trivial(prob: CapacityProblem, method: Method) -> CapacityResult | None:
    if not prob.feasible:
        return CapacityResult(math.inf, None, method, infeasible=True)
    if prob.K.empty:
        empty = CellSet(prob.domain, np.zeros(prob.domain.shape, bool))
        return CapacityResult(0.0, empty, method)
    return None


def _weights(kern: KernelTable) -> np.ndarray:
    W = kern.matrix
    if W is None:
        raise ResourceLimitError(
            f"flow network over {kern.domain.n_cells} cells exceeds the dense cap "
            f"of {DENSE_CELL_LIMIT}"
        )
    return W


def indicator_energy(prob: CapacityProblem, S_g: np.ndarray) -> float:
    """Full discrete W^{delta,1} energy of the indicator of S (G-order mask)."""
    return energy(ScalarField(prob.domain, S_g.astype(float)), prob.kern, 1)


def solve_mincut(prob: CapacityProblem) -> CapacityResult:
    """Exact minimum of the indicator energy over K <= S <= G \\ zero_set.

    K is contracted into the source and the zero set into the sink, so no
    sentinel capacities are needed.
    """
    done = _trivial(prob, Method.MINCUT)
    if done is not None:
        return done
    W = _weights(prob.kern)
    k = prob.K.g_vector
    z = prob.zero_set.g_vector
    free = prob.free
    F = free.size
    s, t = F, F + 1
    C = np.zeros((F + 2, F + 2))
    C[:F, :F] = 2.0 * W[np.ix_(free, free)]
    to_k = 2.0 * W[np.ix_(free, np.flatnonzero(k))].sum(axis=1)
    to_z = 2.0 * W[np.ix_(free, np.flatnonzero(z))].sum(axis=1)
    C[s, :F] = C[:F, s] = to_k
    C[t, :F] = C[:F, t] = to_z
    const = 2.0 * W[np.ix_(np.flatnonzero(k), np.flatnonzero(z))].sum()

    flow = max_flow(C, s, t)
    S = k.copy()
    S[free[flow.source_side[:F]]] = True
    value = indicator_energy(prob, S)
    return CapacityResult(value, CellSet.from_g(prob.domain, S), Method.MINCUT,
                          flow_value=flow.value + const)


def solve_lp(prob: CapacityProblem) -> CapacityResult:
    """Linear-programming relaxation over 0 <= u <= 1 (oracle scale only).

    Returns the LP optimum; the minimizer is the best superlevel set of the
    LP solution, which attains the same energy because the relaxation is exact.
    """
    if prob.domain.n_cells > LP_CELL_LIMIT:
        raise ResourceLimitError(
            f"LP oracle limited to {LP_CELL_LIMIT} cells, got {prob.domain.n_cells}"
        )
    done = _trivial(prob, Method.LP)
    if done is not None:
        return done
    kern = prob.kern
    k = prob.K.g_vector
    z = prob.zero_set.g_vector
    free = prob.free
    F = free.size
    pos = np.full(prob.domain.n_cells, -1)
    pos[free] = np.arange(F)

    if F == 0:
        return CapacityResult(indicator_energy(prob, k), CellSet.from_g(prob.domain, k), Method.LP)
    W = kern.dense()
    lin = 2.0 * (W[np.ix_(free, np.flatnonzero(z))].sum(axis=1)
                 - W[np.ix_(free, np.flatnonzero(k))].sum(axis=1))
    const = 2.0 * (W[np.ix_(free, np.flatnonzero(k))].sum()
                   + W[np.ix_(np.flatnonzero(k), np.flatnonzero(z))].sum())

    both = (pos[kern.i] >= 0) & (pos[kern.j] >= 0)
    a, b, w = pos[kern.i[both]], pos[kern.j[both]], kern.w[both]
    P = w.size
    cost = np.concatenate([lin, 2.0 * w])
    rows = np.repeat(np.arange(2 * P), 3)
    e_col = F + np.arange(P)
    cols = np.column_stack([a, b, e_col, b, a, e_col]).reshape(-1)
    vals = np.tile([1.0, -1.0, -1.0], 2 * P)
    # constraint rows interleave (u_a - u_b - e <= 0, u_b - u_a - e <= 0)
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(2 * P, F + P))
    bounds = [(0.0, 1.0)] * F + [(0.0, None)] * P
    res = linprog(cost, A_ub=A if P else None, b_ub=np.zeros(2 * P) if P else None,
                  bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")
    value = float(res.fun) + const

    u = res.x[:F]
    best_S, best = None, math.inf
    for level in np.append(np.unique(u[u > 1e-9]), np.inf):
        S = k.copy()
        S[free[u >= level]] = True
        e = indicator_energy(prob, S)
        if e < best:
            best, best_S = e, S
    return CapacityResult(value, CellSet.from_g(prob.domain, best_S), Method.LP)


# --------------------------------------------------------------------------
# covering certificate
# --------------------------------------------------------------------------


def bump(t: np.ndarray) -> np.ndarray:
    """Radial profile: 1 on [0, 1], linear down to 0 at 2."""
    return np.clip(2.0 - t, 0.0, 1.0)


def boundary_faces(D: CellSet) -> np.ndarray:
    """Midpoints of the cell faces separating D from its complement."""
    dom = D.domain
    h = dom.spacing
    padded = np.pad(D.mask, 1)
    centers = dom.cell_centers()
    out = []
    for axis in range(dom.dim):
        for step in (-1, 1):
            nb = np.roll(padded, -step, axis=axis)[tuple([slice(1, -1)] * dom.dim)]
            hit = D.mask & ~nb
            pts = centers[hit].copy()
            pts[:, axis] += step * h / 2
            out.append(pts)
    return np.concatenate(out) if out else np.zeros((0, dom.dim))


def _greedy_net(points: np.ndarray, radius: float) -> np.ndarray:
    """Subset of ``points`` with every point strictly within ``radius`` of it."""
    chosen = []
    uncovered = np.ones(len(points), bool)
    while uncovered.any():
        p = points[np.argmax(uncovered)]
        chosen.append(p)
        uncovered &= np.linalg.norm(points - p, axis=1) >= radius
    return np.array(chosen).reshape(-1, points.shape[1])


def _distance_to_complement(D: CellSet) -> np.ndarray:
    """Distance from each D-cell center to the closed complement of the D cells."""
    dom = D.domain
    h = dom.spacing
    grown = dilate_cells(D, 1)
    rim = np.argwhere(grown & ~D.mask)
    inner = np.argwhere(D.mask)
    out = np.empty(len(inner))
    for lo in range(0, len(inner), 2048):
        off = np.abs(inner[lo:lo + 2048, None, :] - rim[None, :, :]) - 0.5
        gap = np.linalg.norm(np.maximum(off, 0.0), axis=2) * h
        out[lo:lo + 2048] = gap.min(axis=1)
    return out


def cover_field(D: CellSet, boundary_radius: float):
    """u = min(1, sum of bumps) over interior balls B(z, dist(z, dD)/3) and a
    greedy cover of dD by balls of radius ``boundary_radius``."""
    dom = D.domain
    h = dom.spacing
    face_slack = 0.5 * h * math.sqrt(dom.dim - 1)
    if boundary_radius <= face_slack:
        raise ValueError(
            f"boundary radius {boundary_radius} cannot cover cell faces (needs > {face_slack})"
        )
    centers = dom.g_centers
    g = np.zeros(dom.n_cells)

    # interior balls: 2B stays inside D, so only D-cells can see them
    d_idx = np.flatnonzero(D.g_vector)
    z = centers[d_idx]
    rz = _distance_to_complement(D) / 3.0
    for lo in range(0, len(d_idx), 1024):
        dist = np.linalg.norm(z[:, None, :] - z[None, lo:lo + 1024, :], axis=2)
        g[d_idx] += bump(dist / rz[None, lo:lo + 1024]).sum(axis=1)

    balls = _greedy_net(boundary_faces(D), boundary_radius - face_slack)
    for lo in range(0, len(balls), 256):
        dist = np.linalg.norm(centers[:, None, :] - balls[None, lo:lo + 256, :], axis=2)
        g += bump(dist / boundary_radius).sum(axis=1)
    u = np.minimum(1.0, g)
    return ScalarField(dom, u), len(d_idx) + len(balls)


def _certificate(D: CellSet, prob: CapacityProblem, radius: float) -> CoveringCertificate:
    u, n_balls = cover_field(D, radius)
    if np.any(u.values[prob.zero_set.g_vector] > 0):
        raise ValueError(
            f"boundary balls of radius {radius} reach the zero layer; use a smaller radius"
        )
    if np.any(u.values[D.g_vector] < 1):
        raise AssertionError("cover field is not 1 on D")
    kern = prob.kern
    d = D.g_vector
    diff = np.abs(u.values[kern.i] - u.values[kern.j])
    cross_pairs = d[kern.i] != d[kern.j]
    outside = ~d[kern.i] & ~d[kern.j]
    cross = 2.0 * float(np.sum(kern.w[cross_pairs] * diff[cross_pairs]))
    remainder = 2.0 * float(np.sum(kern.w[outside] * diff[outside]))
    value = seminorm(u, kern, 1)
    return CoveringCertificate(
        value, None, Method.COVERING, certificate=u,
        cross_term=cross, remainder=remainder,
        two_perimeter=2.0 * perimeter(D, kern),
        boundary_radius=radius, n_balls=n_balls,
    )


def max_boundary_radius(D: CellSet, prob: CapacityProblem) -> float:
    """Largest boundary-ball radius whose bumps (support 2r) miss the zero layer."""
    faces = boundary_faces(D)
    zero_centers = prob.domain.g_centers[prob.zero_set.g_vector]
    if zero_centers.size == 0:
        return math.inf
    gap = math.inf
    for lo in range(0, len(faces), 512):
        dist = np.linalg.norm(faces[lo:lo + 512, None, :] - zero_centers[None], axis=2)
        gap = min(gap, float(dist.min()))
    return gap / 2.0


def covering_certificate(D: CellSet, prob: CapacityProblem, eps_target: float | None = None,
                         boundary_radius: float | None = None,
                         max_refinements: int = 12) -> CoveringCertificate:
    """Admissible field built from a ball cover of D; its energy bounds cap(D) above.

    With ``boundary_radius`` given, one cover at that radius is built.
    Otherwise the radius starts at min(4h, largest admissible) and is halved
    until the remainder is at most ``eps_target``; without a target it goes
    down to the smallest radius that still covers the cell faces.
    """
    if D.empty:
        raise ValueError("covering certificate needs a non-empty set")
    if np.any(dilate_cells(D, 2) & prob.zero_set.mask):
        raise ValueError("D must stay two cells away from the zero layer")
    h = prob.domain.spacing
    r_max = max_boundary_radius(D, prob)
    if boundary_radius is not None:
        if boundary_radius > r_max:
            raise ValueError(
                f"boundary radius {boundary_radius} exceeds admissible {r_max}"
            )
        return _certificate(D, prob.with_K(D), boundary_radius)

    radius = min(4.0 * h, r_max)
    floor = 0.5 * h * math.sqrt(prob.domain.dim - 1)
    cert = _certificate(D, prob.with_K(D), radius)
    for _ in range(max_refinements):
        if eps_target is not None and cert.remainder <= eps_target:
            break
        if radius / 2 <= floor:
            break
        radius /= 2
        cert = _certificate(D, prob.with_K(D), radius)
    return cert


# --------------------------------------------------------------------------
# capacity versus perimeter
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CapPerimeterCheck:
    cap: float
    two_perimeter: float
    ratio: float
    passed: bool


def cap_vs_perimeter_check(D: CellSet, kern: KernelTable,
                           zero_width: int = 1) -> CapPerimeterCheck:
    """cap(D) from the min cut against 2 P(D); passes iff cap <= 2P (1 + 1e-9)."""
    if D.empty:
        raise ValueError("D must be non-empty")
    prob = CapacityProblem.build(kern, D, zero_width)
    if np.any(dilate_cells(D, 2) & prob.zero_set.mask):
        raise ValueError("D must keep a two-cell gap to the boundary layer")
    cap = solve_mincut(prob).value
    two_p = 2.0 * perimeter(D, kern)
    ratio = cap / two_p if two_p > 0 else math.inf
    return CapPerimeterCheck(cap, two_p, ratio, cap <= two_p * (1 + PASS_SLACK))
