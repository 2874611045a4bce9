"""Discrete fractional seminorms, perimeters and capacities on uniform grids."""

__version__ = "0.1.0"

from .capacity import (CapacityProblem, CapacityResult, cap_vs_perimeter_check,
                       covering_certificate, solve_lp, solve_mincut)
from .functional import (ScalarField, coarea_check, level_decompose, lq_norm, perimeter,
                         seminorm)
from .grid import (Annulus, Ball, Box, CellSet, GridDomain, KochPrefractal, build_domain,
                   dilate_volume, minkowski_content, rasterize)
from .kernel import KernelParams, KernelTable, build_kernel, tail_weight_bound
from .mollifier import MollifierParams, mollify, mollify_convergence_scan

__all__ = [
    "Annulus", "Ball", "Box", "CapacityProblem", "CapacityResult", "CellSet", "GridDomain",
    "KernelParams", "KernelTable", "KochPrefractal", "MollifierParams", "ScalarField",
    "build_domain", "build_kernel", "cap_vs_perimeter_check", "coarea_check",
    "covering_certificate", "dilate_volume", "level_decompose", "lq_norm",
    "minkowski_content", "mollify", "mollify_convergence_scan", "perimeter", "rasterize",
    "seminorm", "solve_lp", "solve_mincut", "tail_weight_bound",
]
