"""
Uniform cell grids, rasterized shapes and dilation-volume estimates.

A :class:`GridDomain` covers an open set G with square (or interval) cells of
side ``h``; a cell belongs to G when its center lies in the open region.
Sets and compact sets are :class:`CellSet` masks over the same grid.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from matplotlib.path import Path
from scipy import ndimage

DEFAULT_MAX_CELLS = 2**22
MAX_KOCH_LEVEL = 6


class ResourceLimitError(ValueError):
    """A configured size cap (cells, pairs, solver scale) would be exceeded."""


def max_cells() -> int:
    """Cell-count cap, overridable through ``FRACGEO_MAX_CELLS``."""
    return int(os.environ.get("FRACGEO_MAX_CELLS", DEFAULT_MAX_CELLS))


# --------------------------------------------------------------------------
# shapes
# --------------------------------------------------------------------------


def _vec(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center))
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")

    @property
    def dim(self) -> int:
        return self.center.size

    def bounds(self):
        return self.center - self.radius, self.center + self.radius

    def contains(self, pts: np.ndarray) -> np.ndarray:
        d2 = ((pts - self.center) ** 2).sum(axis=-1)
        return d2 < self.radius**2

    def scaled(self, lam: float) -> Ball:
        return Ball(self.center * lam, self.radius * lam)


@dataclass(frozen=True, eq=False)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", _vec(self.lo))
        object.__setattr__(self, "hi", _vec(self.hi))
        if self.lo.shape != self.hi.shape or not np.all(self.lo < self.hi):
            raise ValueError("box needs lo < hi componentwise")

    @property
    def dim(self) -> int:
        return self.lo.size

    def bounds(self):
        return self.lo, self.hi

    def contains(self, pts: np.ndarray) -> np.ndarray:
        return np.all((pts > self.lo) & (pts < self.hi), axis=-1)

    def scaled(self, lam: float) -> Box:
        return Box(self.lo * lam, self.hi * lam)


@dataclass(frozen=True, eq=False)
class Annulus:
    center: np.ndarray
    r_in: float
    r_out: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center))
        if not 0 < self.r_in < self.r_out:
            raise ValueError("annulus needs 0 < r_in < r_out")

    @property
    def dim(self) -> int:
        return self.center.size

    def bounds(self):
        return self.center - self.r_out, self.center + self.r_out

    def contains(self, pts: np.ndarray) -> np.ndarray:
        d2 = ((pts - self.center) ** 2).sum(axis=-1)
        return (d2 > self.r_in**2) & (d2 < self.r_out**2)

    def scaled(self, lam: float) -> Annulus:
        return Annulus(self.center * lam, self.r_in * lam, self.r_out * lam)


def koch_snowflake(level: int, anchor=(0.0, 0.0), scale: float = 1.0) -> np.ndarray:
    """Vertices of the level-``level`` Koch snowflake, counter-clockwise.

    The level-0 polygon is the equilateral triangle inscribed in the circle of
    radius ``scale`` about ``anchor``; every refinement replaces each edge by
    four edges with the bump pointing outward.
    """
    angles = np.pi / 2 + 2 * np.pi * np.arange(3) / 3
    pts = np.exp(1j * angles)
    rot = np.exp(-1j * np.pi / 3)  # outward for a counter-clockwise polygon
    for _ in range(level):
        a = pts
        b = np.roll(pts, -1)
        s1 = a + (b - a) / 3
        s2 = a + 2 * (b - a) / 3
        tip = s1 + (s2 - s1) * rot
        pts = np.stack([a, s1, tip, s2], axis=1).ravel()
    unit = np.column_stack([pts.real, pts.imag])
    return np.asarray(anchor, dtype=float) + scale * unit


@dataclass(frozen=True, eq=False)
class KochPrefractal:
    level: int
    anchor: np.ndarray = (0.0, 0.0)
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "anchor", _vec(self.anchor))
        if not 0 <= self.level <= MAX_KOCH_LEVEL:
            raise ValueError(f"koch level must lie in [0, {MAX_KOCH_LEVEL}]")
        if self.anchor.size != 2:
            raise ValueError("koch prefractal is two-dimensional")
        if not self.scale > 0:
            raise ValueError("koch scale must be positive")

    @property
    def dim(self) -> int:
        return 2

    @cached_property
    def vertices(self) -> np.ndarray:
        return koch_snowflake(self.level, self.anchor, self.scale)

    def bounds(self):
        v = self.vertices
        return v.min(axis=0), v.max(axis=0)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        path = Path(self.vertices, closed=False)
        flat = pts.reshape(-1, 2)
        return path.contains_points(flat).reshape(pts.shape[:-1])

    def scaled(self, lam: float) -> KochPrefractal:
        return KochPrefractal(self.level, self.anchor * lam, self.scale * lam)


Shape = Ball | Box | Annulus | KochPrefractal


# --------------------------------------------------------------------------
# domains and cell sets
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GridDomain:
    """Uniform grid over the bounding box of an open set G.

    ``g_mask`` marks cells whose centers lie in G. ``boundary_layer`` marks
    G-cells whose closed cell touches (face or corner) a cell outside G,
    including cells beyond the array edge.
    """

    dim: int
    spacing: float
    origin: np.ndarray
    shape: tuple[int, ...]
    g_mask: np.ndarray
    boundary_layer: np.ndarray = field(repr=False)

    @classmethod
    def from_mask(cls, g_mask: np.ndarray, spacing: float, origin=None) -> GridDomain:
        g_mask = np.array(g_mask, dtype=bool)
        dim = g_mask.ndim
        if dim not in (1, 2):
            raise ValueError("only dimensions 1 and 2 are supported")
        if not spacing > 0:
            raise ValueError("spacing must be positive")
        if g_mask.size > max_cells():
            raise ResourceLimitError(
                f"grid of {g_mask.size} cells exceeds the cap of {max_cells()} "
                "(set FRACGEO_MAX_CELLS to override)"
            )
        origin = np.zeros(dim) if origin is None else _vec(origin)
        interior = ndimage.binary_erosion(
            g_mask, structure=np.ones((3,) * dim, dtype=bool), border_value=0
        )
        g_mask.setflags(write=False)
        layer = g_mask & ~interior
        layer.setflags(write=False)
        return cls(dim, float(spacing), origin, tuple(g_mask.shape), g_mask, layer)

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @cached_property
    def g_flat(self) -> np.ndarray:
        """Flat (C-order) grid indices of the G-cells; defines G-cell order."""
        return np.flatnonzero(self.g_mask)

    @property
    def n_cells(self) -> int:
        return self.g_flat.size

    @cached_property
    def g_coords(self) -> np.ndarray:
        """Integer grid coordinates of G-cells, shape (n_cells, dim)."""
        return np.column_stack(np.unravel_index(self.g_flat, self.shape))

    @cached_property
    def g_centers(self) -> np.ndarray:
        return self.origin + (self.g_coords + 0.5) * self.spacing

    def cell_centers(self) -> np.ndarray:
        """Centers of every cell of the array, shape ``self.shape + (dim,)``."""
        return _centers(self.origin, self.shape, self.spacing)

    def to_g(self, full: np.ndarray) -> np.ndarray:
        """Restrict a full-grid array to the G-cells (G order)."""
        return np.asarray(full).ravel()[self.g_flat]

    def from_g(self, values: np.ndarray, fill=0) -> np.ndarray:
        values = np.asarray(values)
        out = np.full(self.shape, fill, dtype=values.dtype)
        out.ravel()[self.g_flat] = values
        return out

    def cells(self, mask: np.ndarray) -> CellSet:
        return CellSet(self, mask)

    @property
    def all_cells(self) -> CellSet:
        return CellSet(self, self.g_mask)

    @property
    def boundary_cells(self) -> CellSet:
        return CellSet(self, self.boundary_layer)


@dataclass(frozen=True, eq=False)
class CellSet:
    domain: GridDomain
    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != self.domain.shape:
            raise ValueError("cell set mask does not match the domain grid")
        if np.any(mask & ~self.domain.g_mask):
            raise ValueError("cell set must consist of G-cells")
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_g(cls, domain: GridDomain, g_values) -> CellSet:
        return cls(domain, domain.from_g(np.asarray(g_values, dtype=bool), False))

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    @property
    def volume(self) -> float:
        return self.count * self.domain.cell_volume

    @property
    def empty(self) -> bool:
        return not self.mask.any()

    @cached_property
    def g_vector(self) -> np.ndarray:
        """Boolean membership per G-cell, in G order."""
        return self.domain.to_g(self.mask)

    def __or__(self, other: CellSet) -> CellSet:
        return CellSet(self.domain, self.mask | other.mask)

    def __and__(self, other: CellSet) -> CellSet:
        return CellSet(self.domain, self.mask & other.mask)

    def __sub__(self, other: CellSet) -> CellSet:
        return CellSet(self.domain, self.mask & ~other.mask)

    def complement(self) -> CellSet:
        """G minus this set."""
        return CellSet(self.domain, self.domain.g_mask & ~self.mask)

    def issubset(self, other: CellSet) -> bool:
        return not np.any(self.mask & ~other.mask)


# --------------------------------------------------------------------------
# operations
# --------------------------------------------------------------------------


def _centers(origin: np.ndarray, shape, spacing: float) -> np.ndarray:
    axes = [origin[a] + (np.arange(c) + 0.5) * spacing for a, c in enumerate(shape)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def _cell_count(extent: np.ndarray, spacing: float) -> np.ndarray:
    ratio = extent / spacing
    # absorb representation error such as 2 / 0.1 = 20.000000000000004
    return np.maximum(np.ceil(ratio - 1e-9 * np.maximum(ratio, 1.0)), 1).astype(int)


def build_domain(shape: Shape, spacing: float, margin: float = 0.0) -> GridDomain:
    """Grid over the shape's bounding box inflated by ``margin``; G = shape."""
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    if margin < 0:
        raise ValueError("margin must be non-negative")
    lo, hi = (np.asarray(b, dtype=float) for b in shape.bounds())
    origin = lo - margin
    counts = _cell_count(hi - lo + 2 * margin, spacing)
    total = math.prod(int(c) for c in counts)
    if total > max_cells():
        raise ResourceLimitError(
            f"grid of {total} cells exceeds the cap of {max_cells()} "
            "(set FRACGEO_MAX_CELLS to override)"
        )
    g_mask = shape.contains(_centers(origin, tuple(counts), spacing))
    return GridDomain.from_mask(g_mask, spacing, origin)


def rasterize(shape: Shape, domain: GridDomain) -> CellSet:
    """G-cells whose centers lie inside ``shape``."""
    if shape.dim != domain.dim:
        raise ValueError("shape and domain dimensions differ")
    inside = shape.contains(domain.cell_centers())
    return CellSet(domain, inside & domain.g_mask)


def dilate_volume(A: CellSet, r: float) -> float:
    """Volume of the cells whose centers lie within distance ``r`` of a center in A.

    Cells outside the domain's array count too; the array is padded as needed.
    """
    if r < 0:
        raise ValueError("dilation radius must be non-negative")
    if A.empty:
        return 0.0
    h = A.domain.spacing
    pad = int(math.floor(r / h)) + 1
    padded = np.pad(A.mask, pad)
    dist = ndimage.distance_transform_edt(~padded)
    near = dist <= r / h * (1 + 1e-12)
    return float(near.sum()) * A.domain.cell_volume


def minkowski_content(A: CellSet, s: float, r_schedule) -> float:
    """Minimum over the schedule of ``dilate_volume(A, r) / r**(n - s)``.

    Stands in for the lower Minkowski content; the grid cannot resolve r below
    two cells, so radii under ``2h`` are rejected.
    """
    n = A.domain.dim
    if not 0 <= s <= n:
        raise ValueError(f"s must lie in [0, {n}]")
    radii = [float(r) for r in r_schedule]
    if not radii:
        raise ValueError("empty radius schedule")
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radius schedule must be strictly decreasing")
    h = A.domain.spacing
    if min(radii) < 2 * h * (1 - 1e-12):
        raise ValueError(f"radii below 2h = {2 * h} are below grid resolution")
    if A.empty:
        return 0.0
    return min(dilate_volume(A, r) / r ** (n - s) for r in radii)
