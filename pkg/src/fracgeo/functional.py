"""
Discrete fractional seminorm, delta-perimeter, L^q norms and the layer-cake
decomposition for piecewise-constant fields.

The table stores unordered pairs, the double integral runs over ordered
pairs, hence the factor 2 in :func:`seminorm`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import CellSet, GridDomain
from .kernel import KernelTable


@dataclass(frozen=True, eq=False)
class ScalarField:
    """One value per G-cell (G order); zero outside G by convention."""

    domain: GridDomain
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.domain.n_cells,):
            raise ValueError(
                f"field needs {self.domain.n_cells} values, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def indicator(cls, A: CellSet, value: float = 1.0) -> ScalarField:
        return cls(A.domain, value * A.g_vector.astype(float))

    @classmethod
    def from_grid(cls, domain: GridDomain, full: np.ndarray) -> ScalarField:
        return cls(domain, domain.to_g(full))

    def to_grid(self) -> np.ndarray:
        return self.domain.from_g(self.values, 0.0)

    def __add__(self, other: ScalarField) -> ScalarField:
        return ScalarField(self.domain, self.values + other.values)

    def __sub__(self, other: ScalarField) -> ScalarField:
        return ScalarField(self.domain, self.values - other.values)

    def __mul__(self, c: float) -> ScalarField:
        return ScalarField(self.domain, c * self.values)

    __rmul__ = __mul__

    def __abs__(self) -> ScalarField:
        return ScalarField(self.domain, np.abs(self.values))


@dataclass(frozen=True, eq=False)
class LevelDecomposition:
    thresholds: np.ndarray
    level_sets: list[CellSet]

    def __len__(self) -> int:
        return len(self.level_sets)


def _check_domain(u: ScalarField, kern: KernelTable) -> None:
    if u.domain is not kern.domain:
        raise ValueError("field and kernel table live on different domains")


def _pair_sum(kern: KernelTable, values: np.ndarray, p: float = 1.0) -> float:
    """Sum over tabulated unordered pairs of w_ij |v_i - v_j|^p (pairwise summation)."""
    diff = np.abs(values[kern.i] - values[kern.j])
    if p != 1:
        diff **= p
    return float(np.sum(kern.w * diff))


def energy(u: ScalarField, kern: KernelTable, p: float = 1.0) -> float:
    """The p-th power of the seminorm: sum over ordered pairs of w |u_i - u_j|^p."""
    _check_domain(u, kern)
    return 2.0 * _pair_sum(kern, u.values, p)


def seminorm(u: ScalarField, kern: KernelTable, p: float = 1.0) -> float:
    """Discrete |u|_{W^{delta,p}(G)} with the table's kernel exponent n + delta.

    For p > 1 the W^{delta,p} kernel has exponent n + delta*p; pass a table
    built with that exponent.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    e = energy(u, kern, p)
    return e if p == 1 else e ** (1.0 / p)


def seminorm_with_error(u: ScalarField, kern: KernelTable, p: float = 1.0):
    """Seminorm plus an upper bound on what the truncated pairs could add.

    Omitted pairs contribute at most 2^p * tail * sum_i |u_i|^p to the energy
    (using |a - b|^p <= 2^(p-1)(|a|^p + |b|^p) and symmetry).
    """
    value = seminorm(u, kern, p)
    tail = kern.tail_bound_per_cell
    if tail == 0:
        return value, 0.0
    e = energy(u, kern, p)
    extra = 2.0**p * tail * float(np.sum(np.abs(u.values) ** p))
    return value, (e + extra) ** (1.0 / p) - value


def perimeter(A: CellSet, kern: KernelTable) -> float:
    """P_delta(A, G): weight between A and G \\ A."""
    if A.domain is not kern.domain:
        raise ValueError("cell set and kernel table live on different domains")
    a = A.g_vector.astype(float)
    W = kern.matrix
    if W is None:
        return _pair_sum(kern, a)
    return float(a @ (W @ (1.0 - a)))


def perimeter_with_error(A: CellSet, kern: KernelTable):
    return perimeter(A, kern), kern.tail_bound_per_cell * A.count


def lq_norm(u: ScalarField, q: float) -> float:
    if q < 1:
        raise ValueError("q must be >= 1")
    vol = u.domain.cell_volume
    return float(np.sum(np.abs(u.values) ** q) * vol) ** (1.0 / q)


def level_decompose(u: ScalarField) -> LevelDecomposition:
    """Superlevel sets {u >= t_k} at the distinct positive values t_k of u."""
    if np.any(u.values < 0):
        raise ValueError("level decomposition needs a non-negative field (pass |u|)")
    thresholds = np.unique(u.values[u.values > 0])
    sets = [CellSet.from_g(u.domain, u.values >= t) for t in thresholds]
    return LevelDecomposition(thresholds, sets)


def level_perimeters(dec: LevelDecomposition, kern: KernelTable, batch: int = 256) -> np.ndarray:
    """Perimeter of every level set; batched through the dense matrix when cached."""
    W = kern.matrix
    if W is None:
        return np.array([perimeter(L, kern) for L in dec.level_sets])
    out = np.empty(len(dec))
    for lo in range(0, len(dec), batch):
        A = np.stack([L.g_vector for L in dec.level_sets[lo:lo + batch]], axis=1).astype(float)
        out[lo:lo + batch] = np.einsum("ik,ik->k", A, W @ (1.0 - A))
    return out


def layer_cake_sum(u: ScalarField, kern: KernelTable,
                   decomposition: LevelDecomposition | None = None) -> float:
    """sum_k (t_k - t_{k-1}) P_delta({u >= t_k}) with t_0 = 0."""
    dec = level_decompose(u) if decomposition is None else decomposition
    steps = np.diff(dec.thresholds, prepend=0.0)
    return float(np.sum(steps * level_perimeters(dec, kern)))


def coarea_check(u: ScalarField, kern: KernelTable) -> tuple[float, float]:
    """(half the W^{delta,1} seminorm, layer-cake sum of level-set perimeters).

    Equal up to roundoff for every non-negative piecewise-constant field.
    """
    rhs = layer_cake_sum(u, kern)
    lhs = 0.5 * seminorm(u, kern, 1)
    return lhs, rhs
