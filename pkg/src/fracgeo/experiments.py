"""
Experiment suites driven by an :class:`ExperimentConfig`.

Each suite turns the configured shapes into report rows. Shapes are
processed independently (optionally on a thread pool); the report is sorted
before it is written, so the thread count never changes the output.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .capacity import (PASS_SLACK, CapacityProblem, cap_vs_perimeter_check,
                       covering_certificate, dilate_cells, solve_lp, solve_mincut,
                       zero_layer, LP_CELL_LIMIT)
from .config import Experiment, ExperimentConfig
from .functional import (ScalarField, coarea_check, level_decompose, level_perimeters,
                         lq_norm, perimeter, perimeter_with_error, seminorm,
                         seminorm_with_error)
from .grid import Ball, CellSet, GridDomain, KochPrefractal, build_domain, rasterize
from .kernel import KernelTable, build_kernel
from .mollifier import mollify_convergence_scan
from .report import Report, Row, Verdict

RANDOM_MAX_VALUE = 4
TENT_LEVELS = 8
COAREA_RTOL = 1e-10
IDENTITY_RTOL = 1e-12
LP_RTOL = 1e-8
MOLLIFY_TARGET_RATIO = 0.1


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class Setup:
    cfg: ExperimentConfig
    scale: float
    domain: GridDomain
    kern: KernelTable
    sets: dict[str, CellSet]

    @property
    def h(self) -> float:
        return self.domain.spacing

    def row(self, shape_id: str, quantity: str, value: float, error_bound: float = 0.0,
            passed: Verdict = Verdict.NA) -> Row:
        c = self.cfg
        return Row(c.experiment.value, shape_id, c.delta, c.q, self.h, quantity,
                   float(value), float(error_bound), passed)

    def zero_mask(self) -> np.ndarray:
        return zero_layer(self.domain, self.cfg.zero_width).g_vector


def prepare(cfg: ExperimentConfig, scale: float = 1.0) -> Setup:
    """Grid, kernel table and rasterized shapes, everything scaled by ``scale``."""
    G = cfg.domain if scale == 1 else cfg.domain.scaled(scale)
    domain = build_domain(G, cfg.spacing * scale, cfg.margin * scale)
    kern = build_kernel(domain, cfg.kernel)
    _ = kern.matrix  # build the cached dense matrix before any worker threads start
    sets = {}
    for sid, shape in cfg.shapes.items():
        s = shape if scale == 1 else shape.scaled(scale)
        sets[sid] = rasterize(s, domain)
    return Setup(cfg, scale, domain, kern, sets)


def _map(fn, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _per_shape(setup: Setup, fn, threads: int) -> list[Row]:
    def guarded(sid):
        A = setup.sets[sid]
        if A.empty:
            return [setup.row(sid, "skipped_empty", 0.0)]
        try:
            return fn(sid, A)
        except (ValueError, RuntimeError) as exc:
            raise ExperimentError(f"shape {sid}: {exc}") from exc

    rows = []
    for part in _map(guarded, setup.sets, threads):
        rows.extend(part)
    return rows


def _rel(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return abs(a - b) / scale if scale > 0 else 0.0


def _le(a: float, b: float) -> bool:
    """a <= b with the multiplicative pass slack."""
    return a <= b * (1 + PASS_SLACK)


def has_gap(setup: Setup, A: CellSet) -> bool:
    """True when A keeps two cells away from the zero layer."""
    zero = zero_layer(setup.domain, setup.cfg.zero_width)
    return not np.any(dilate_cells(A, 2) & zero.mask)


# --------------------------------------------------------------------------
# test fields
# --------------------------------------------------------------------------


def random_fields(setup: Setup) -> dict[str, ScalarField]:
    """Seeded integer fields in {0, ..., 4}, zero on the zero layer."""
    rng = np.random.default_rng(setup.cfg.seed)
    zero = setup.zero_mask()
    out = {}
    for k in range(setup.cfg.random_fields):
        v = rng.integers(0, RANDOM_MAX_VALUE + 1, setup.domain.n_cells).astype(float)
        v[zero] = 0.0
        out[f"random_{k}"] = ScalarField(setup.domain, v)
    return out


def tent_field(setup: Setup, ball: Ball) -> ScalarField:
    """Cone of height 1 over ``ball``, rounded to a few levels, zero on the zero layer."""
    c = setup.domain.g_centers
    t = np.clip(1.0 - np.linalg.norm(c - ball.center * setup.scale, axis=1)
                / (ball.radius * setup.scale), 0.0, 1.0)
    v = np.ceil(t * TENT_LEVELS) / TENT_LEVELS
    v[setup.zero_mask()] = 0.0
    return ScalarField(setup.domain, v)


# --------------------------------------------------------------------------
# single-operation suites
# --------------------------------------------------------------------------


def _perimeter_rows(setup: Setup, sid: str, A: CellSet) -> list[Row]:
    p, err = perimeter_with_error(A, setup.kern)
    return [setup.row(sid, "volume", A.volume), setup.row(sid, "perimeter", p, err)]


def _seminorm_rows(setup: Setup, sid: str, A: CellSet) -> list[Row]:
    u = ScalarField.indicator(A)
    s, err = seminorm_with_error(u, setup.kern, 1)
    p = perimeter(A, setup.kern)
    gap = _rel(s, 2 * p)
    return [setup.row(sid, "seminorm", s, err),
            setup.row(sid, "two_perimeter", 2 * p, err),
            setup.row(sid, "indicator_identity_rel_diff", gap, 0.0,
                      Verdict.of(gap <= IDENTITY_RTOL))]


def _coarea_rows(setup: Setup, fid: str, u: ScalarField) -> list[Row]:
    lhs, rhs = coarea_check(abs(u), setup.kern)
    gap = abs(lhs - rhs)
    return [setup.row(fid, "coarea_lhs", lhs),
            setup.row(fid, "coarea_rhs", rhs),
            setup.row(fid, "coarea_rel_diff", gap / lhs if lhs > 0 else gap, 0.0,
                      Verdict.of(gap <= COAREA_RTOL * lhs))]


def _capacity_rows(setup: Setup, sid: str, K: CellSet) -> list[Row]:
    prob = CapacityProblem.build(setup.kern, K, setup.cfg.zero_width)
    if not prob.feasible:
        return [setup.row(sid, "capacity_infeasible", math.inf)]
    cut = solve_mincut(prob)
    rows = [setup.row(sid, "capacity_mincut", cut.value)]
    if setup.domain.n_cells <= LP_CELL_LIMIT:
        lp = solve_lp(prob)
        gap = _rel(lp.value, cut.value)
        rows += [setup.row(sid, "capacity_lp", lp.value),
                 setup.row(sid, "lp_mincut_rel_diff", gap, 0.0, Verdict.of(gap <= LP_RTOL))]
    if has_gap(setup, K):
        cert = covering_certificate(K, prob)
        rows += [setup.row(sid, "covering_energy", cert.value, 0.0,
                           Verdict.of(_le(cut.value, cert.value))),
                 setup.row(sid, "covering_cross_term", cert.cross_term, 0.0,
                           Verdict.of(_le(cert.cross_term, cert.two_perimeter))),
                 setup.row(sid, "covering_remainder", cert.remainder)]
    return rows


def _cap_vs_perimeter_rows(setup: Setup, sid: str, D: CellSet) -> list[Row]:
    chk = cap_vs_perimeter_check(D, setup.kern, setup.cfg.zero_width)
    exploratory = isinstance(setup.cfg.shapes[sid], KochPrefractal)
    verdict = Verdict.NA if exploratory else Verdict.of(chk.passed)
    return [setup.row(sid, "capacity", chk.cap),
            setup.row(sid, "two_perimeter", chk.two_perimeter),
            setup.row(sid, "cap_over_two_perimeter", chk.ratio, 0.0, verdict)]


def _mollify_rows(setup: Setup, sid: str, A: CellSet) -> list[Row]:
    scan = mollify_convergence_scan(ScalarField.indicator(A), setup.kern, setup.cfg.mollify_j)
    rows = []
    for r in scan:
        rows.append(setup.row(sid, f"seminorm_distance@j{r.j:04d}", r.seminorm_distance))
        rows.append(setup.row(sid, f"l1_distance@j{r.j:04d}", r.l1_distance))
    l1 = [r.l1_distance for r in scan]
    sem = [r.seminorm_distance for r in scan]
    decreasing = all(b < a for a, b in zip(l1, l1[1:]))
    rows.append(setup.row(sid, "l1_strictly_decreasing", float(decreasing), 0.0,
                          Verdict.of(decreasing)))
    if sem[0] > 0:
        ratio = sem[-1] / sem[0]
        rows.append(setup.row(sid, "seminorm_last_over_first", ratio, 0.0,
                              Verdict.of(ratio <= MOLLIFY_TARGET_RATIO)))
    return rows


_SINGLE = {
    Experiment.PERIMETER: _perimeter_rows,
    Experiment.SEMINORM: _seminorm_rows,
    Experiment.CAPACITY: _capacity_rows,
    Experiment.CAP_VS_PERIMETER: _cap_vs_perimeter_rows,
    Experiment.MOLLIFY_SCAN: _mollify_rows,
}


def run_single(cfg: ExperimentConfig, threads: int = 1) -> Report:
    """Dispatch for the one-operation experiments."""
    setup = prepare(cfg)
    report = Report()
    if cfg.experiment is Experiment.COAREA_CHECK:
        fields = {sid: ScalarField.indicator(A) for sid, A in setup.sets.items()}
        fields.update(random_fields(setup))
        for part in _map(lambda kv: _coarea_rows(setup, *kv), fields.items(), threads):
            report.extend(part)
        return report
    if cfg.experiment not in _SINGLE:
        raise ValueError(f"{cfg.experiment.value} is not a single-operation experiment")
    fn = _SINGLE[cfg.experiment]
    report.extend(_per_shape(setup, lambda sid, A: fn(setup, sid, A), threads))
    return report


# --------------------------------------------------------------------------
# isoperimetric scan
# --------------------------------------------------------------------------


def run_isoperimetric_scan(cfg: ExperimentConfig, threads: int = 1) -> Report:
    """Volume, perimeter and volume^(1/q) / (2P) per shape, plus scaling exponents.

    At every extra scale lambda the grid, domain and shapes are rescaled
    together, so perimeter and capacity must grow by exactly lambda^(n - delta).
    """
    base = prepare(cfg)
    n = base.domain.dim
    target = n - cfg.delta
    report = Report()

    def base_rows(sid, A):
        p = perimeter(A, base.kern)
        rows = [base.row(sid, "volume", A.volume), base.row(sid, "perimeter", p),
                base.row(sid, "iso_ratio", A.volume ** (1 / cfg.q) / (2 * p) if p > 0 else math.inf)]
        if has_gap(base, A):
            prob = CapacityProblem.build(base.kern, A, cfg.zero_width)
            rows.append(base.row(sid, "capacity", solve_mincut(prob).value))
        return rows

    report.extend(_per_shape(base, base_rows, threads))
    ratios = {r.shape_id: r.value for r in report.rows if r.quantity == "iso_ratio"}
    if ratios:
        best = max(ratios.values())
        report.add(base.row("*", "max_iso_ratio", best))
        for sid, v in ratios.items():
            report.add(base.row(sid, "is_max_iso_ratio", float(v == best)))

    for lam in cfg.scales:
        if lam == 1:
            continue
        big = prepare(cfg, lam)
        tag = f"@x{lam:g}"

        def scaled_rows(sid, A, big=big, tag=tag, lam=lam):
            p1 = report.find(sid, "perimeter").value
            p2 = perimeter(A, big.kern)
            rows = [big.row(sid, "perimeter" + tag, p2)]
            if p1 > 0:
                e = math.log(p2 / p1) / math.log(lam)
                rows.append(big.row(sid, "perimeter_exponent" + tag, e, 0.0,
                                    Verdict.of(abs(e / target - 1) <= PASS_SLACK)))
            try:
                c1 = report.find(sid, "capacity").value
            except KeyError:
                return rows
            prob = CapacityProblem.build(big.kern, A, cfg.zero_width)
            c2 = solve_mincut(prob).value
            rows.append(big.row(sid, "capacity" + tag, c2))
            if c1 > 0:
                e = math.log(c2 / c1) / math.log(lam)
                rows.append(big.row(sid, "capacity_exponent" + tag, e, 0.0,
                                    Verdict.of(abs(e / target - 1) <= PASS_SLACK)))
            return rows

        report.extend(_per_shape(big, scaled_rows, threads))
    return report


# --------------------------------------------------------------------------
# equivalence of the three conditions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FieldStats:
    lq: float
    seminorm: float
    level_constant: float  # max over level sets of |L|^(1/q) / (2 P(L))


def field_stats(u: ScalarField, kern: KernelTable, q: float) -> FieldStats:
    a = abs(u)
    dec = level_decompose(a)
    if len(dec) == 0:
        return FieldStats(0.0, 0.0, 0.0)
    vols = np.array([L.volume for L in dec.level_sets])
    per = level_perimeters(dec, kern)
    with np.errstate(divide="ignore"):
        ratio = np.where(per > 0, vols ** (1 / q) / (2 * per), np.inf)
    return FieldStats(lq_norm(a, q), seminorm(a, kern, 1), float(ratio.max()))


def equivalence_fields(setup: Setup, minimizers: dict[str, CellSet],
                       covers: dict[str, ScalarField]) -> dict[str, ScalarField]:
    fields: dict[str, ScalarField] = {}
    for sid, A in setup.sets.items():
        if A.empty:
            continue
        for c in (1, 2, 5):
            fields[f"{sid}:indicator*{c}"] = ScalarField.indicator(A, c)
        shape = setup.cfg.shapes[sid]
        if isinstance(shape, Ball):
            fields[f"{sid}:tent"] = tent_field(setup, shape)
    for sid, S in minimizers.items():
        fields[f"{sid}:argmin"] = ScalarField.indicator(S)
    for sid, u in covers.items():
        fields[f"{sid}:cover"] = u
    fields.update(random_fields(setup))
    return fields


def run_equivalence_check(cfg: ExperimentConfig, threads: int = 1) -> Report:
    """Empirical constants of the three conditions and the per-sample chain.

    C_A: max ||u||_q / |u|_{W^{delta,1}} over test fields.
    C_B: max |K|^(1/q) / cap(K) over test compacts.
    C_C: max |D|^(1/q) / (2 P(D)) over test sets.

    Checks, all with slack 1 + 1e-9:
    (i)   |K|^(1/q) <= C_A cap(K) for every compact,
    (ii)  |D|^(1/q) <= 2 C_B P(D) for every set,
    (iii) ||u||_q <= C(u) |u|_{W^{delta,1}} for every field, with C(u) the
          constant measured over u's own level sets.
    """
    setup = prepare(cfg)
    q = cfg.q
    report = Report()
    usable = {}
    for sid, A in setup.sets.items():
        if A.empty:
            report.add(setup.row(sid, "skipped_empty", 0.0))
        elif not has_gap(setup, A):
            report.add(setup.row(sid, "skipped_touches_zero_layer", 0.0))
        else:
            usable[sid] = A
    if not usable:
        raise ExperimentError("equivalence check needs at least one shape inside G")

    def solve(sid):
        A = usable[sid]
        try:
            prob = CapacityProblem.build(setup.kern, A, cfg.zero_width)
            cut = solve_mincut(prob)
            cert = covering_certificate(A, prob)
        except (ValueError, RuntimeError) as exc:
            raise ExperimentError(f"shape {sid}: {exc}") from exc
        return sid, cut, cert, perimeter(A, setup.kern)

    solved = {sid: (cut, cert, p) for sid, cut, cert, p in _map(solve, usable, threads)}
    minimizers = {sid: cut.minimizer for sid, (cut, _, _) in solved.items()}
    covers = {sid: cert.certificate for sid, (_, cert, _) in solved.items()}
    fields = equivalence_fields(setup, minimizers, covers)
    stats = dict(zip(fields, _map(lambda u: field_stats(u, setup.kern, q),
                                  fields.values(), threads)))

    positive = [s for s in stats.values() if s.seminorm > 0]
    C_A = max(s.lq / s.seminorm for s in positive)
    C_B = max(usable[sid].volume ** (1 / q) / cut.value for sid, (cut, _, _) in solved.items())
    C_C = max(usable[sid].volume ** (1 / q) / (2 * p) for sid, (_, _, p) in solved.items())
    C_levels = max(s.level_constant for s in positive)
    report.add(setup.row("*", "C_A", C_A))
    report.add(setup.row("*", "C_B", C_B))
    report.add(setup.row("*", "C_C", C_C))
    report.add(setup.row("*", "C_C_over_all_level_sets", C_levels))
    report.add(setup.row("*", "C_B_over_C_A", C_B / C_A, 0.0, Verdict.of(_le(C_B, C_A))))
    report.add(setup.row("*", "C_C_over_C_B", C_C / C_B, 0.0, Verdict.of(_le(C_C, C_B))))
    report.add(setup.row("*", "C_A_over_C_C_over_all_level_sets", C_A / C_levels, 0.0,
                         Verdict.of(_le(C_A, C_levels))))

    for sid, (cut, cert, p) in solved.items():
        vq = usable[sid].volume ** (1 / q)
        report.add(setup.row(sid, "volume", usable[sid].volume))
        report.add(setup.row(sid, "capacity", cut.value))
        report.add(setup.row(sid, "two_perimeter", 2 * p))
        report.add(setup.row(sid, "covering_energy", cert.value, 0.0,
                             Verdict.of(_le(cut.value, cert.value))))
        report.add(setup.row(sid, "chain_A_implies_B", vq / (C_A * cut.value), 0.0,
                             Verdict.of(_le(vq, C_A * cut.value))))
        report.add(setup.row(sid, "chain_B_implies_C", vq / (2 * C_B * p), 0.0,
                             Verdict.of(_le(vq, 2 * C_B * p))))
        report.add(setup.row(sid, "indicator_remark", vq / (2 * C_A * p), 0.0,
                             Verdict.of(_le(vq, 2 * C_A * p))))
    for fid, s in stats.items():
        if s.seminorm == 0:
            report.add(setup.row(fid, "skipped_zero_field", 0.0))
            continue
        report.add(setup.row(fid, "lq_norm", s.lq))
        report.add(setup.row(fid, "seminorm", s.seminorm))
        report.add(setup.row(fid, "level_set_constant", s.level_constant))
        bound = s.level_constant * s.seminorm
        report.add(setup.row(fid, "chain_C_implies_A", s.lq / bound, 0.0,
                             Verdict.of(_le(s.lq, bound))))
    return report


def run(cfg: ExperimentConfig, threads: int = 1) -> Report:
    if cfg.experiment is Experiment.EQUIVALENCE_CHECK:
        return run_equivalence_check(cfg, threads)
    if cfg.experiment is Experiment.ISOPERIMETRIC_SCAN:
        return run_isoperimetric_scan(cfg, threads)
    return run_single(cfg, threads)
