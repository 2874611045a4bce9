"""
Pairwise cell interaction weights for the kernel |x - y|^-(n + delta).

On a uniform grid the weight of a cell pair depends only on the integer
offset ``d`` between the cells:

    w_ij = h^(n - delta) * J(d),   J(d) = int_Q int_{Q + d} |x - y|^-(n + delta)

with Q the unit cube. Far pairs (|d| >= k) use the midpoint value |d|^-(n+delta).
Near pairs are refined by splitting both cells into 2^n children; child pairs
still closer than ``k`` original cells are refined again, up to the
subdivision depth. Touching pairs (cells sharing a face or a corner) are
singular: splitting a touching pair reproduces touching pairs of the same
offsets at half the size, so their values solve a small linear system

    J_T = 2^-(n - delta) * (M J_T + b)

where ``b`` collects the non-touching children.
"""

from __future__ import annotations

import itertools
import math
import os
import struct
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np
from scipy.special import gamma

from .grid import GridDomain, ResourceLimitError

DEFAULT_MAX_PAIR_BYTES = 1 << 30
DENSE_CELL_LIMIT = 6000
PAIR_RECORD = np.dtype([("i", "<u4"), ("j", "<u4"), ("w", "<f8")])
_MAGIC = b"FGKTBL01"
_HEADER = struct.Struct("<iqddiidq")


def max_pair_bytes() -> int:
    return int(os.environ.get("FRACGEO_MAX_PAIR_BYTES", DEFAULT_MAX_PAIR_BYTES))


@dataclass(frozen=True)
class KernelParams:
    delta: float
    near_field_radius_cells: int = 4
    subdivision_depth: int = 3
    truncation_radius: float = math.inf

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.near_field_radius_cells < 1:
            raise ValueError("near_field_radius_cells must be >= 1")
        if self.subdivision_depth < 0:
            raise ValueError("subdivision_depth must be >= 0")
        if not self.truncation_radius > 0:
            raise ValueError("truncation_radius must be positive")


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere S^(n-1) in R^n (2 for n = 1)."""
    return 2 * math.pi ** (n / 2) / gamma(n / 2)


def tail_weight_bound(params: KernelParams, domain: GridDomain) -> float:
    """Kernel mass beyond the truncation radius, per cell: h^n sigma R^-delta / delta."""
    R = params.truncation_radius
    if math.isinf(R):
        return 0.0
    n, d = domain.dim, params.delta
    return domain.cell_volume * sphere_area(n) * R ** (-d) / d


# --------------------------------------------------------------------------
# normalized offset integrals
# --------------------------------------------------------------------------


def _child_shifts(n: int):
    # b - a for child indices a, b in {0,1}^n, with multiplicities
    out = []
    for e in itertools.product((-1, 0, 1), repeat=n):
        out.append((e, math.prod(2 if x == 0 else 1 for x in e)))
    return out


def _offset_integral_fn(n: int, delta: float, k: int):
    scale = 2.0 ** (-(n - delta))
    shifts = _child_shifts(n)
    expo = -(n + delta) / 2

    @lru_cache(maxsize=None)
    def J(d: tuple, depth: int, level: int) -> float:
        r2 = sum(x * x for x in d)
        if depth == 0 or r2 >= (k << level) ** 2:
            return r2**expo
        total = 0.0
        for e, mult in shifts:
            child = tuple(2 * a + b for a, b in zip(d, e))
            total += mult * J(child, depth - 1, level + 1)
        return scale * total

    return J


def touching_integrals(n: int, delta: float, k: int, depth: int) -> dict:
    """Normalized integrals for all offsets with max-norm 1."""
    J = _offset_integral_fn(n, delta, k)
    scale = 2.0 ** (-(n - delta))
    touching = [t for t in itertools.product((-1, 0, 1), repeat=n) if any(t)]
    index = {t: a for a, t in enumerate(touching)}
    A = np.eye(len(touching))
    b = np.zeros(len(touching))
    for t in touching:
        for e, mult in _child_shifts(n):
            child = tuple(2 * a + x for a, x in zip(t, e))
            if max(abs(c) for c in child) == 1:
                A[index[t], index[child]] -= scale * mult
            else:
                b[index[t]] += scale * mult * J(child, depth, 1)
    return dict(zip(touching, np.linalg.solve(A, b)))


@lru_cache(maxsize=64)
def near_field_table(n: int, delta: float, k: int, depth: int) -> np.ndarray:
    """Normalized integrals J indexed by absolute offsets, ``|d| < k``.

    Entries with ``|d| >= k`` hold the midpoint value; index 0 is unused.
    """
    J = _offset_integral_fn(n, delta, k)
    touch = touching_integrals(n, delta, k, depth)
    table = np.zeros((k + 1,) * n)
    for d in itertools.product(range(k + 1), repeat=n):
        r2 = sum(x * x for x in d)
        if r2 == 0:
            continue
        if r2 >= k * k:
            table[d] = r2 ** (-(n + delta) / 2)
        elif max(d) == 1:
            table[d] = touch[d]
        else:
            table[d] = J(d, depth, 0)
    table.setflags(write=False)
    return table


# --------------------------------------------------------------------------
# pair table
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KernelTable:
    """Unordered G-cell pairs (i < j, sorted by i) with weights w_ij > 0."""

    domain: GridDomain
    params: KernelParams
    i: np.ndarray
    j: np.ndarray
    w: np.ndarray
    tail_bound_per_cell: float

    @property
    def n_pairs(self) -> int:
        return self.w.size

    @property
    def total_weight(self) -> float:
        return float(self.w.sum())

    def dense(self) -> np.ndarray:
        """Symmetric (n_cells, n_cells) weight matrix with zero diagonal."""
        N = self.domain.n_cells
        W = np.zeros((N, N))
        W[self.i, self.j] = self.w
        W[self.j, self.i] = self.w
        return W

    @cached_property
    def matrix(self) -> np.ndarray | None:
        """Cached read-only :meth:`dense`, or None above ``DENSE_CELL_LIMIT`` cells."""
        if self.domain.n_cells > DENSE_CELL_LIMIT:
            return None
        W = self.dense()
        W.setflags(write=False)
        return W

    def weight(self, a: int, b: int) -> float:
        """Weight between G-cells ``a`` and ``b`` (0 if not tabulated)."""
        a, b = min(a, b), max(a, b)
        lo, hi = np.searchsorted(self.i, [a, a + 1])
        hit = np.flatnonzero(self.j[lo:hi] == b)
        return float(self.w[lo + hit[0]]) if hit.size else 0.0

    def save(self, path) -> None:
        """Binary dump: fixed header then little-endian (u4 i, u4 j, f8 w) records."""
        p = self.params
        header = _HEADER.pack(
            self.domain.dim, self.domain.n_cells, self.domain.spacing, p.delta,
            p.near_field_radius_cells, p.subdivision_depth, p.truncation_radius,
            self.n_pairs,
        )
        rec = np.empty(self.n_pairs, dtype=PAIR_RECORD)
        rec["i"], rec["j"], rec["w"] = self.i, self.j, self.w
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(header)
            fh.write(rec.tobytes())

    @classmethod
    def load(cls, path, domain: GridDomain) -> KernelTable:
        raw = Path(path).read_bytes()
        if raw[: len(_MAGIC)] != _MAGIC:
            raise ValueError(f"{path}: not a kernel table dump")
        off = len(_MAGIC)
        dim, n_cells, h, delta, k, m, R, n_pairs = _HEADER.unpack_from(raw, off)
        if dim != domain.dim or n_cells != domain.n_cells or h != domain.spacing:
            raise ValueError(f"{path}: table was built for a different domain")
        params = KernelParams(delta, k, m, R)
        rec = np.frombuffer(raw, dtype=PAIR_RECORD, count=n_pairs, offset=off + _HEADER.size)
        return cls(domain, params, rec["i"].astype(np.intp), rec["j"].astype(np.intp),
                   rec["w"].copy(), tail_weight_bound(params, domain))


def build_kernel(domain: GridDomain, params: KernelParams) -> KernelTable:
    n, h, N = domain.dim, domain.spacing, domain.n_cells
    k, R = params.near_field_radius_cells, params.truncation_radius
    if not math.isinf(R) and R <= k * h:
        raise ValueError(f"truncation radius {R} must exceed k*h = {k * h}")
    estimate = N * (N - 1) // 2 * PAIR_RECORD.itemsize
    if estimate > max_pair_bytes():
        raise ResourceLimitError(
            f"pair table for {N} cells needs ~{estimate / 2**20:.0f} MiB, cap is "
            f"{max_pair_bytes() / 2**20:.0f} MiB (FRACGEO_MAX_PAIR_BYTES)"
        )
    i, j = np.triu_indices(N, 1)
    coords = domain.g_coords
    d2 = np.zeros(i.size, dtype=np.int64)
    for a in range(n):
        diff = coords[j, a] - coords[i, a]
        d2 += diff * diff
    if not math.isinf(R):
        keep = d2 <= (R / h) ** 2
        i, j, d2 = i[keep], j[keep], d2[keep]

    w = d2.astype(float) ** (-(n + params.delta) / 2)
    near = np.flatnonzero(d2 < k * k)
    if near.size:
        table = near_field_table(n, params.delta, k, params.subdivision_depth)
        idx = tuple(np.abs(coords[j[near], a] - coords[i[near], a]) for a in range(n))
        w[near] = table[idx]
    w *= h ** (n - params.delta)
    return KernelTable(domain, params, i, j, w, tail_weight_bound(params, domain))
