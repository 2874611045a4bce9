import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracgeo.capacity import (CapacityProblem, Method, cap_vs_perimeter_check,
                              covering_certificate, cover_field, indicator_energy,
                              max_boundary_radius, solve_lp, solve_mincut, zero_layer)
from fracgeo.functional import ScalarField, perimeter, seminorm
from fracgeo.grid import Annulus, Ball, Box, CellSet, ResourceLimitError, build_domain, rasterize
from fracgeo.kernel import KernelParams, build_kernel

from oracles import brute_force_capacity


def line_problem(n_cells, K_idx):
    dom = build_domain(Box((0.0,), (float(n_cells),)), 1.0)
    kern = build_kernel(dom, KernelParams(0.5))
    K = np.zeros(n_cells, bool)
    K[K_idx] = True
    return CapacityProblem.build(kern, CellSet.from_g(dom, K))


def test_empty_K_has_zero_capacity(square_kernel, square_domain):
    prob = CapacityProblem.build(square_kernel, CellSet(square_domain, np.zeros(square_domain.shape, bool)))
    assert solve_mincut(prob).value == 0
    assert solve_lp(prob).value == 0


def test_three_cell_line():
    prob = line_problem(3, [1])
    W = prob.kern.dense()
    res = solve_mincut(prob)
    assert res.value == pytest.approx(2 * (W[1, 0] + W[1, 2]), rel=1e-14)
    assert res.value == pytest.approx(4 * prob.kern.weight(0, 1), rel=1e-14)
    assert list(res.minimizer.g_vector) == [False, True, False]
    assert solve_lp(prob).value == pytest.approx(res.value, rel=1e-8)


def test_five_cell_line_against_enumeration():
    prob = line_problem(5, [2])
    W = prob.kern.dense()
    ref = brute_force_capacity(W, prob.K.g_vector, prob.zero_set.g_vector)
    assert solve_mincut(prob).value == pytest.approx(ref, rel=1e-14)


def test_K_filling_all_free_cells(square_kernel, square_domain):
    zero = zero_layer(square_domain)
    K = zero.complement()
    prob = CapacityProblem.build(square_kernel, K)
    W = square_kernel.dense()
    expected = 2 * W[np.ix_(K.g_vector, zero.g_vector)].sum()
    assert solve_mincut(prob).value == pytest.approx(expected, rel=1e-12)
    assert solve_lp(prob).value == pytest.approx(expected, rel=1e-8)


def test_infeasible_when_K_meets_zero_set(square_kernel, square_domain):
    prob = CapacityProblem.build(square_kernel, square_domain.all_cells)
    res = solve_mincut(prob)
    assert res.infeasible and math.isinf(res.value)


def random_problem(seed, max_cells=64):
    rng = np.random.default_rng(seed)
    side = int(rng.integers(3, int(math.isqrt(max_cells)) + 1))
    dim = int(rng.integers(1, 3))
    n = side * side if dim == 2 else int(rng.integers(3, max_cells + 1))
    hi = (side, side) if dim == 2 else (n,)
    dom = build_domain(Box((0.0,) * dim, tuple(float(x) for x in hi)), 1.0)
    kern = build_kernel(dom, KernelParams(float(rng.uniform(0.1, 0.9))))
    zero = zero_layer(dom).g_vector
    K = (rng.random(dom.n_cells) < rng.uniform(0.05, 0.4)) & ~zero
    return CapacityProblem.build(kern, CellSet.from_g(dom, K))


@given(st.integers(0, 10**6))
def test_mincut_equals_enumeration_on_small_problems(seed):
    prob = random_problem(seed, max_cells=25)
    if prob.free.size > 14:
        prob = prob.with_K(CellSet.from_g(prob.domain, ~prob.zero_set.g_vector
                                          & (np.arange(prob.domain.n_cells) % 2 == 0)))
    W = prob.kern.dense()
    ref = brute_force_capacity(W, prob.K.g_vector, prob.zero_set.g_vector)
    res = solve_mincut(prob)
    assert res.value == pytest.approx(ref, rel=1e-12, abs=1e-14)
    S = res.minimizer.g_vector
    assert prob.K.issubset(res.minimizer) and not np.any(S & prob.zero_set.g_vector)


@given(st.integers(0, 10**6))
def test_lp_relaxation_is_exact(seed):
    prob = random_problem(seed, max_cells=100)
    lp, cut = solve_lp(prob), solve_mincut(prob)
    assert abs(lp.value - cut.value) <= 1e-8 * max(cut.value, 1e-300)
    assert lp.method is Method.LP
    assert indicator_energy(prob, lp.minimizer.g_vector) == pytest.approx(cut.value, rel=1e-8)


def test_mincut_against_networkx_cut(square_kernel, square_domain):
    K = rasterize(Ball((0.2, 0.1), 0.3), square_domain)
    prob = CapacityProblem.build(square_kernel, K)
    W = square_kernel.dense()
    G = nx.Graph()
    k, z = prob.K.g_vector, prob.zero_set.g_vector
    for a in range(square_domain.n_cells):
        for b in range(a + 1, square_domain.n_cells):
            G.add_edge(a, b, capacity=2 * W[a, b])
    for a in np.flatnonzero(k):
        G.add_edge("s", int(a), capacity=math.inf)
    for a in np.flatnonzero(z):
        G.add_edge(int(a), "t", capacity=math.inf)
    ref, _ = nx.minimum_cut(G, "s", "t")
    assert solve_mincut(prob).value == pytest.approx(ref, rel=1e-9)


def test_lp_scale_cap(square_kernel, square_domain):
    big = build_domain(Box((0, 0), (1, 1)), 1 / 24)
    kern = build_kernel(big, KernelParams(0.5))
    prob = CapacityProblem.build(kern, rasterize(Ball((0.5, 0.5), 0.2), big))
    with pytest.raises(ResourceLimitError):
        solve_lp(prob)


def test_monotonicity_in_K_and_zero_set(square_kernel, square_domain):
    K1 = rasterize(Ball((0, 0), 0.2), square_domain)
    K2 = rasterize(Ball((0, 0), 0.4), square_domain)
    p1 = CapacityProblem.build(square_kernel, K1)
    p2 = CapacityProblem.build(square_kernel, K2)
    assert solve_mincut(p1).value <= solve_mincut(p2).value * (1 + 1e-12)
    wide = CapacityProblem.build(square_kernel, K1, zero_width=3)
    assert solve_mincut(p1).value <= solve_mincut(wide).value * (1 + 1e-12)


def test_capacity_scaling_is_exact():
    G = Box((-1, -1), (1, 1))
    D = Annulus((0.1, 0), 0.2, 0.5)
    vals = []
    for lam in (1, 2):
        dom = build_domain(G.scaled(lam), 0.1 * lam)
        kern = build_kernel(dom, KernelParams(0.25))
        vals.append(solve_mincut(CapacityProblem.build(kern, rasterize(D.scaled(lam), dom))).value)
    assert vals[1] / vals[0] == pytest.approx(2**1.75, rel=1e-12)


# --------------------------------------------------------------------------
# covering certificate
# --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def disk_setting():
    dom = build_domain(Box((-1, -1), (1, 1)), 0.05)
    kern = build_kernel(dom, KernelParams(0.5))
    D = rasterize(Ball((0, 0), 0.4), dom)
    return dom, kern, D, CapacityProblem.build(kern, D)


def test_certificate_is_admissible_and_bounds_capacity(disk_setting):
    dom, kern, D, prob = disk_setting
    cut = solve_mincut(prob)
    cert = covering_certificate(D, prob)
    u = cert.certificate.values
    assert np.all(u[D.g_vector] == 1) and np.all(u[prob.zero_set.g_vector] == 0)
    assert np.all((u >= 0) & (u <= 1))
    assert cert.value >= cut.value
    assert cert.value == pytest.approx(seminorm(cert.certificate, kern), rel=1e-14)
    assert cert.value == pytest.approx(cert.cross_term + cert.remainder, rel=1e-12)
    assert cert.cross_term <= cert.two_perimeter * (1 + 1e-12)
    assert cert.two_perimeter == pytest.approx(2 * perimeter(D, kern))


def test_remainder_decreases_with_finer_cover(disk_setting):
    dom, kern, D, prob = disk_setting
    h = dom.spacing
    rems = [covering_certificate(D, prob, boundary_radius=r).remainder for r in (4 * h, 2 * h, h)]
    assert rems[0] > rems[1] > rems[2]


def test_eps_target_drives_refinement(disk_setting):
    dom, kern, D, prob = disk_setting
    coarse = covering_certificate(D, prob, boundary_radius=4 * dom.spacing)
    fine = covering_certificate(D, prob, eps_target=0.8 * coarse.remainder)
    assert fine.remainder <= 0.8 * coarse.remainder
    assert fine.boundary_radius < coarse.boundary_radius


def test_single_cell_certificate(disk_setting):
    dom, kern, _, prob = disk_setting
    cell = rasterize(Box((0.0, 0.0), (0.05, 0.05)), dom)
    assert cell.count == 1
    cert = covering_certificate(cell, prob)
    assert cert.certificate.values[cell.g_vector][0] == 1
    assert cert.value >= solve_mincut(prob.with_K(cell)).value


def test_certificate_guards(disk_setting):
    dom, kern, D, prob = disk_setting
    near_edge = rasterize(Box((-1, -1), (-0.8, -0.8)), dom)
    with pytest.raises(ValueError):
        covering_certificate(near_edge, prob)
    with pytest.raises(ValueError):
        covering_certificate(D, prob, boundary_radius=max_boundary_radius(D, prob) * 1.5)
    with pytest.raises(ValueError):
        cover_field(D, 0.02)  # cannot reach across half a face


@pytest.mark.parametrize("shape", [Ball((0, 0), 0.5), Box((-0.4, -0.4), (0.4, 0.4)),
                                   Annulus((0, 0), 0.25, 0.6)])
def test_cap_below_two_perimeter(square_kernel, square_domain, shape):
    chk = cap_vs_perimeter_check(rasterize(shape, square_domain), square_kernel)
    assert chk.passed and chk.cap <= chk.two_perimeter * (1 + 1e-9)


def test_cap_check_requires_gap(square_kernel, square_domain):
    with pytest.raises(ValueError):
        cap_vs_perimeter_check(rasterize(Ball((0, 0), 0.85), square_domain), square_kernel)
