"""The four benchmark problems and the moment-vs-reference harness.

Example 1: smooth depth bump, no magnetic field, periodic domain, with
constant / linear / quadratic / cubic vertical velocity profiles (all of
mean 1/4, so the depth-averaged problem is profile-independent).
Example 2: the same bump with a strong magnetic field hb of mean 1.1
carrying the matching vertical profile.  Examples 3 and 4 are
magneto-geostrophic adjustment problems at low and high Rossby number
with a sinusoidal vertical velocity profile, on a wide open domain.

``run_comparison`` runs the vertically resolved reference once, each
requested moment order once, depth-averages the reference, and reports
L1 errors at the final time alongside snapshot and vertical-profile CSVs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import closure, fv1d, model1d, ref2d
from .io import format_float, write_csv

logger = logging.getLogger(__name__)

PROFILE_CASES = ("constant", "linear", "quadratic", "sinusoid")
BUMP_CASES = ("constant", "linear", "quadratic", "cubic")

#: Vertical velocity profiles of Examples 1-2, all of depth mean 1/4:
#: moment equivalents beta_1 = -1/4 (linear), beta_2 = -1/4 (quadratic),
#: beta_3 = -1/4 (cubic).
_BUMP_MOMENT_OF_CASE = {"constant": 0, "linear": 1, "quadratic": 2, "cubic": 3}


def _bump_height(y):
    return 1.0 + np.exp(3.0 * np.cos(np.pi * (np.asarray(y) + 0.5)) - 4.0)


def _profile_from_case(case: str) -> Callable:
    """v(zeta) for the bump examples: mean 1/4 minus 1/4 of one basis mode."""
    k = _BUMP_MOMENT_OF_CASE[case]
    if k == 0:
        return lambda z: 0.25 * np.ones_like(np.asarray(z, dtype=float))
    basis = closure.BasisSet.build(k)
    return lambda z: 0.25 - 0.25 * basis.eval(k, z)


def _sin_profile(z):
    return 0.25 * np.sin(2.0 * np.pi * np.asarray(z, dtype=float))


@dataclass
class ExperimentSpec:
    """Configuration of one benchmark problem."""

    example: int
    case: str
    y_min: float
    y_max: float
    n_cells: int
    n_zeta: int
    t_final: float
    boundary: str
    nu: float
    theta: float
    g: float
    f_const: float
    profile_y0: float                       # slice position for profile output
    height: Callable                        # h(y)
    u_field: Callable                       # u(y, zeta)
    v_profile: Callable                     # v(zeta), y-independent profile
    hb_profile: Callable                    # hb(zeta), y-independent (div-free)
    snapshot_times: tuple[float, ...] = ()

    def coriolis(self, y):
        return np.full_like(np.asarray(y, dtype=float), self.f_const)

    def grid1d(self, n_cells: int | None = None) -> fv1d.Grid1D:
        return fv1d.Grid1D(self.y_min, self.y_max, n_cells or self.n_cells,
                           self.boundary)

    def grid2d(self, n_y: int | None = None,
               n_zeta: int | None = None) -> ref2d.Grid2D:
        return ref2d.Grid2D(self.y_min, self.y_max, n_y or self.n_cells,
                            n_zeta or self.n_zeta, self.boundary)


def build_example(example: int, case: str, order: int,
                  n_cells: int | None = None, n_zeta: int | None = None,
                  ) -> tuple[ExperimentSpec, fv1d.Solution1D, ref2d.Solution2D]:
    """Experiment spec plus initial moment and reference states."""
    spec = make_spec(example, case)
    if n_cells is not None:
        spec.n_cells = n_cells
    if n_zeta is not None:
        spec.n_zeta = n_zeta
    return spec, initial_moment_solution(spec, order), initial_reference_solution(spec)


def make_spec(example: int, case: str) -> ExperimentSpec:
    if example in (1, 2):
        if case not in BUMP_CASES:
            raise ValueError(f"example {example} has cases {BUMP_CASES}, got {case!r}")
        v_prof = _profile_from_case(case)
        if example == 1:
            hb_prof = lambda z: np.zeros_like(np.asarray(z, dtype=float))
        else:
            k = _BUMP_MOMENT_OF_CASE[case]
            if k == 0:
                hb_prof = lambda z: 1.1 * np.ones_like(np.asarray(z, dtype=float))
            else:
                basis = closure.BasisSet.build(k)
                hb_prof = lambda z, b=basis, k=k: 1.1 - 0.25 * b.eval(k, z)
        return ExperimentSpec(
            example=example, case=case, y_min=-1.0, y_max=1.0,
            n_cells=200, n_zeta=100,
            t_final=2.0 if example == 1 else 1.5,
            boundary="periodic", nu=0.45,
            theta=1.0 if example == 1 else 1.3,
            g=1.0, f_const=0.0, profile_y0=-0.4,
            height=_bump_height,
            u_field=lambda y, z: np.zeros(np.broadcast(y, z).shape),
            v_profile=v_prof, hb_profile=hb_prof)
    if example in (3, 4):
        if case != "sinusoid":
            raise ValueError(f"example {example} has the single case 'sinusoid'")
        if example == 3:
            u_field = lambda y, z: np.broadcast_to(
                0.1 * np.exp(-np.asarray(y, dtype=float) ** 2),
                np.broadcast(y, z).shape).copy()
            b0 = 0.1
        else:
            def u_field(y, z):
                y = np.asarray(y, dtype=float)
                val = 1.1 * ((1.0 + np.tanh(4.0 * y + 2.0))
                             * (1.0 - np.tanh(4.0 * y - 2.0))
                             / (1.0 + np.tanh(2.0)) ** 2)
                return np.broadcast_to(val, np.broadcast(y, z).shape).copy()
            b0 = 1.1
        return ExperimentSpec(
            example=example, case=case, y_min=-20.0, y_max=20.0,
            n_cells=800, n_zeta=100, t_final=10.0,
            boundary="outflow", nu=0.45, theta=1.3, g=1.0,
            f_const=1.0, profile_y0=-5.0,
            height=lambda y: np.ones_like(np.asarray(y, dtype=float)),
            u_field=u_field, v_profile=_sin_profile,
            hb_profile=lambda z, b0=b0: b0 * np.ones_like(np.asarray(z, dtype=float)),
            snapshot_times=(5.0, 10.0))
    raise ValueError(f"unknown example id {example}")


def initial_moment_solution(spec: ExperimentSpec, order: int,
                            n_cells: int | None = None) -> fv1d.Solution1D:
    """Midpoint-sampled conservative initial data for the moment system.

    Velocity moments come from projecting the pointwise v-profile (so
    h*beta_i = h(y) * beta_i), magnetic moments from projecting the
    hb-profile directly (h*eta_i is the profile coefficient itself, which
    keeps hb_m spatially constant as the divergence constraint demands).
    """
    grid = spec.grid1d(n_cells)
    y = grid.centers()
    h = spec.height(y)
    v_mean, v_mom = closure.project_profile(spec.v_profile, order)
    hb_mean, hb_mom = closure.project_profile(spec.hb_profile, order)

    cells = np.zeros((grid.n_cells, model1d.n_vars(order)))
    cells[:, model1d.H] = h
    cells[:, model1d.HU] = h * spec.u_field(y, 0.0)
    cells[:, model1d.HV] = h * v_mean
    cells[:, model1d.HB] = hb_mean
    for i in range(1, order + 1):
        cells[:, model1d.moment_index(i, model1d.BETA)] = h * v_mom[i - 1]
        cells[:, model1d.moment_index(i, model1d.ETA)] = hb_mom[i - 1]
    return fv1d.Solution1D(grid, cells)


def initial_reference_solution(spec: ExperimentSpec, n_y: int | None = None,
                               n_zeta: int | None = None) -> ref2d.Solution2D:
    grid = spec.grid2d(n_y, n_zeta)
    y = grid.y_centers()[:, None]
    z = grid.zeta_centers()[None, :]
    h = spec.height(grid.y_centers())[:, None]
    U = np.zeros((grid.n_y, grid.n_zeta, 5))
    U[..., 0] = h
    U[..., 1] = h * spec.u_field(y, z)
    U[..., 2] = h * spec.v_profile(z)
    U[..., 4] = np.broadcast_to(spec.hb_profile(z), U[..., 4].shape)
    B = ref2d.make_divergence_field(U, grid, spec.theta)
    return ref2d.Solution2D(grid, U, B)


def model_params(spec: ExperimentSpec, order: int) -> model1d.ModelParams:
    return model1d.ModelParams(g=spec.g, order=order, coriolis=spec.coriolis)


def ref_params(spec: ExperimentSpec) -> ref2d.RefParams:
    return ref2d.RefParams(g=spec.g, coriolis=spec.coriolis)


def l1_error(field_a: np.ndarray, field_b: np.ndarray, dy: float) -> float:
    """Grid L1 distance sum |a - b| dy; the grids must match."""
    a = np.asarray(field_a, dtype=float)
    b = np.asarray(field_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"grid mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum() * dy)


MEAN_FIELDS = ("h", "u_m", "v_m", "a_m", "b_m")


def moment_mean_fields(solution: fv1d.Solution1D) -> dict[str, np.ndarray]:
    U = solution.cells
    h = U[:, model1d.H]
    return {"h": h, "u_m": U[:, 1] / h, "v_m": U[:, 2] / h,
            "a_m": U[:, 3] / h, "b_m": U[:, 4] / h}


def reference_mean_fields(solution: ref2d.Solution2D) -> dict[str, np.ndarray]:
    means = ref2d.depth_average(solution)
    return dict(zip(MEAN_FIELDS, means.T))


@dataclass
class ErrorReport:
    """L1 distances to the depth-averaged reference, per order and field."""

    orders: list[int]
    errors: dict[int, dict[str, float]]

    def table(self) -> list[tuple[int, str, float]]:
        return [(m, var, self.errors[m][var])
                for m in self.orders for var in MEAN_FIELDS]


def moment_snapshot_path(out_dir, spec, order, t):
    return (Path(out_dir) / f"example{spec.example}" / spec.case /
            f"M{order}" / f"snapshot_t{format_time(t)}.csv")


def format_time(t: float) -> str:
    return f"{t:g}"


def write_moment_snapshot(path, solution: fv1d.Solution1D, order: int) -> None:
    header = ["y", "h", "hu_m", "hv_m", "ha_m", "hb_m"]
    for i in range(1, order + 1):
        header += [f"h_alpha_{i}", f"h_beta_{i}", f"h_gamma_{i}", f"h_eta_{i}"]
    cols = [solution.grid.centers()] + [solution.cells[:, k]
                                        for k in range(solution.cells.shape[1])]
    write_csv(path, header, cols)


def write_reference_snapshot(path, solution: ref2d.Solution2D) -> None:
    grid = solution.grid
    y = np.repeat(grid.y_centers(), grid.n_zeta)
    z = np.tile(grid.zeta_centers(), grid.n_y)
    h = solution.U[..., 0].reshape(-1)
    prim = [solution.U[..., k].reshape(-1) / h for k in range(1, 5)]
    write_csv(path, ["y", "zeta", "h", "u", "v", "a", "b"], [y, z, h] + prim)


def write_depth_averaged(path, solution: ref2d.Solution2D) -> None:
    means = ref2d.depth_average(solution)
    write_csv(path, ["y"] + list(MEAN_FIELDS),
              [solution.grid.y_centers()] + [means[:, k] for k in range(5)])


def moment_profiles(solution: fv1d.Solution1D, order: int, y0: float,
                    zeta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vertical v and b profiles of the moment run at the column nearest y0."""
    grid = solution.grid
    pos = (y0 - grid.y_min) / grid.dy
    j = int(np.floor(pos))
    if pos == j and j > 0:
        j -= 1
    j = min(max(j, 0), grid.n_cells - 1)
    U = solution.cells[j]
    h = U[model1d.H]
    v_mom = [U[model1d.moment_index(i, model1d.BETA)] / h for i in range(1, order + 1)]
    b_mom = [U[model1d.moment_index(i, model1d.ETA)] / h for i in range(1, order + 1)]
    v = closure.eval_profile(U[model1d.HV] / h, v_mom, zeta)
    b = closure.eval_profile(U[model1d.HB] / h, b_mom, zeta)
    return np.atleast_1d(v), np.atleast_1d(b)


@dataclass
class ComparisonResult:
    spec: ExperimentSpec
    report: ErrorReport
    reference: ref2d.Solution2D
    moment_runs: dict[int, fv1d.Solution1D]
    ref_stats: ref2d.Run2DStats
    moment_stats: dict[int, fv1d.RunStats]

    @property
    def max_im_ratio(self) -> float:
        return max((s.max_im_ratio for s in self.moment_stats.values()),
                   default=0.0)


def run_comparison(spec: ExperimentSpec, orders: Sequence[int],
                   out_dir=None) -> ComparisonResult:
    """Reference run + one moment run per order + L1 errors at t_final."""
    rparams = ref_params(spec)
    ref0 = initial_reference_solution(spec)
    logger.info("example %d (%s): reference run %dx%d to t=%g",
                spec.example, spec.case, ref0.grid.n_y, ref0.grid.n_zeta,
                spec.t_final)
    reference, ref_stats = ref2d.run2d(ref0, rparams, spec.t_final,
                                       nu=spec.nu, theta=spec.theta)
    ref_means = reference_mean_fields(reference)

    errors: dict[int, dict[str, float]] = {}
    runs: dict[int, fv1d.Solution1D] = {}
    stats: dict[int, fv1d.RunStats] = {}
    for m in orders:
        params = model_params(spec, m)
        sol0 = initial_moment_solution(spec, m)
        try:
            sol, st = fv1d.run(sol0, params, spec.t_final,
                               nu=spec.nu, theta=spec.theta)
        except Exception:
            logger.error("moment run failed at order M=%d", m)
            raise
        runs[m] = sol
        stats[m] = st
        mean = moment_mean_fields(sol)
        errors[m] = {var: l1_error(mean[var], ref_means[var], sol.grid.dy)
                     for var in MEAN_FIELDS}
        logger.info("M=%d: %s", m, {k: f"{v:.3e}" for k, v in errors[m].items()})

    report = ErrorReport(orders=list(orders), errors=errors)
    result = ComparisonResult(spec, report, reference, runs, ref_stats, stats)
    if out_dir is not None:
        write_comparison_outputs(result, out_dir)
    return result


def write_comparison_outputs(result: ComparisonResult, out_dir) -> list[Path]:
    """Snapshot, profile, and error CSVs under example<id>/<case>/."""
    spec = result.spec
    base = Path(out_dir) / f"example{spec.example}" / spec.case
    written = []

    t = spec.t_final
    ref_dir = base / "reference"
    path = ref_dir / f"snapshot_t{format_time(t)}.csv"
    write_reference_snapshot(path, result.reference)
    written.append(path)
    path = ref_dir / f"depth_averaged_t{format_time(t)}.csv"
    write_depth_averaged(path, result.reference)
    written.append(path)

    _, zeta, prim = ref2d.profile_slice(result.reference, spec.profile_y0)
    path = ref_dir / f"profiles_y{spec.profile_y0:g}.csv"
    write_csv(path, ["zeta", "v", "b"], [zeta, prim[:, 2], prim[:, 4]])
    written.append(path)

    for m, sol in result.moment_runs.items():
        mdir = base / f"M{m}"
        path = mdir / f"snapshot_t{format_time(t)}.csv"
        write_moment_snapshot(path, sol, m)
        written.append(path)
        v_prof, b_prof = moment_profiles(sol, m, spec.profile_y0, zeta)
        path = mdir / f"profiles_y{spec.profile_y0:g}.csv"
        write_csv(path, ["zeta", "v", "b"],
                  [zeta, np.broadcast_to(v_prof, zeta.shape),
                   np.broadcast_to(b_prof, zeta.shape)])
        written.append(path)

    path = base / "errors.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("M,var,l1\n")
        for m, var, err in result.report.table():
            fh.write(f"{m},{var},{format_float(err)}\n")
    written.append(path)
    return written


def lockstep_cross_check(spec: ExperimentSpec, t_final: float,
                         n_cells: int, n_zeta: int = 8) -> dict[str, float]:
    """Run the M=0 moment solver and the reference solver with shared time
    steps from zeta-independent data; returns L1 distances of the mean
    fields.  Used for cross-model consistency checks (b = 0 data keeps
    both solvers formally identical row by row)."""
    params = model_params(spec, 0)
    sol1 = initial_moment_solution(spec, 0, n_cells)
    sol2 = initial_reference_solution(spec, n_cells, n_zeta)
    rparams = ref_params(spec)

    while sol1.time < t_final - 1e-14:
        r1 = fv1d.rhs(sol1, params, spec.theta)
        dt1 = spec.nu * sol1.grid.dy / r1.max_speed
        dt2 = ref2d.cfl_dt_2d(sol2, rparams, spec.nu, spec.theta)
        dt = min(dt1, dt2, t_final - sol1.time)
        sol1, _ = fv1d.step_ssprk3(sol1, params, dt, spec.theta)
        sol2, _ = ref2d.step_ssprk3_2d(sol2, rparams, dt, spec.theta)

    mean1 = moment_mean_fields(sol1)
    mean2 = reference_mean_fields(sol2)
    return {var: l1_error(mean1[var], mean2[var], sol1.grid.dy)
            for var in MEAN_FIELDS}
