"""Command-line front end: configuration, run orchestration, data export.

Subcommands: ``run-moment``, ``run-reference``, ``compare``,
``hyperbolicity-scan``, ``tensors``.  Settings come from an optional JSON
config file (``--config``), positional ``key=value`` tokens, and repeated
``--override key=value`` flags, merged in that order.  Every run writes
its artifacts plus a ``manifest.json`` recording the configuration, code
version, wall time, step counts, the worst complex-eigenvalue ratio seen,
and a SHA-256 per data file (reruns of the same configuration are
byte-identical).

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 hyperbolicity abort.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__, closure, experiments, fv1d, hyperbolicity, model1d, ref2d
from .errors import ConfigError, HyperbolicityError, SolverError
from .io import file_sha256, format_float, write_csv, write_manifest

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_HYPERBOLICITY = 4

MODES = ("run-moment", "run-reference", "compare", "hyperbolicity-scan", "tensors")

_EXPR_NAMES = {name: getattr(np, name) for name in
               ("sin", "cos", "tan", "tanh", "cosh", "sinh", "exp", "log",
                "sqrt", "abs", "pi", "e", "where", "minimum", "maximum")}


@dataclass
class RunConfig:
    """Validated settings for one CLI invocation."""

    mode: str
    example: int | None = None
    case: str | None = None
    order: int = 0
    orders: list[int] = field(default_factory=list)
    n_cells: int | None = None
    n_zeta: int | None = None
    nu: float = 0.45
    theta: float = 1.3
    g: float = 1.0
    f: float | None = None
    final_time: float | None = None
    snapshot_times: list[float] = field(default_factory=list)
    tol_im: float = 0.1
    out_dir: str = "runs"
    format: str = "csv"
    # custom initial conditions (expressions in y and zeta) for run modes
    y_min: float | None = None
    y_max: float | None = None
    boundary: str | None = None
    ic_h: str | None = None
    ic_u: str | None = None
    ic_v: str | None = None
    ic_hb: str | None = None
    # hyperbolicity scan controls
    b_min: float = -5.0
    b_max: float = 5.0
    beta_min: float = -10.0
    beta_max: float = 10.0
    eta_min: float = -10.0
    eta_max: float = 10.0
    resolution: int = 51
    gh: float = 1.0

    def validate(self) -> "RunConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode: unknown mode {self.mode!r}")
        if not 0.0 < self.nu <= 0.5:
            raise ConfigError(f"nu: CFL number {self.nu} outside (0, 0.5]")
        if not 1.0 <= self.theta <= 2.0:
            raise ConfigError(f"theta: limiter parameter {self.theta} outside [1, 2]")
        if not 0 <= self.order <= closure.MAX_ORDER:
            raise ConfigError(f"order: {self.order} outside [0, {closure.MAX_ORDER}]")
        for m in self.orders:
            if not 0 <= m <= closure.MAX_ORDER:
                raise ConfigError(f"orders: {m} outside [0, {closure.MAX_ORDER}]")
        if self.g <= 0.0:
            raise ConfigError(f"g: gravity {self.g} not positive")
        if self.gh <= 0.0:
            raise ConfigError(f"gh: {self.gh} not positive")
        if self.tol_im <= 0.0:
            raise ConfigError(f"tol_im: {self.tol_im} not positive")
        if self.resolution < 2:
            raise ConfigError(f"resolution: {self.resolution} below 2")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format: {self.format!r} not csv|json")
        if self.mode in ("run-moment", "run-reference", "compare"):
            custom = self.ic_h is not None
            if self.example is None and not custom:
                raise ConfigError("example: required (or give ic_* expressions)")
        return self


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, value):
    """Parse a raw override value for the given config field."""
    if key not in _FIELD_TYPES:
        raise ConfigError(f"{key}: unknown configuration key")
    if isinstance(value, str):
        if key in ("orders", "snapshot_times"):
            parts = [p for p in value.split(",") if p]
            return [int(p) if key == "orders" else float(p) for p in parts]
        if key in ("case", "mode", "boundary", "format", "out_dir") or key.startswith("ic_"):
            return value
        try:
            value = json.loads(value)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{key}: cannot parse {value!r}") from exc
    if key in ("example", "order", "n_cells", "n_zeta", "resolution"):
        if value is not None and int(value) != value:
            raise ConfigError(f"{key}: expected integer, got {value!r}")
        return None if value is None else int(value)
    if key == "orders":
        return [int(v) for v in value]
    if key == "snapshot_times":
        return [float(v) for v in value]
    return value


def parse_config(text: str, mode: str | None = None,
                 overrides: list[str] | None = None) -> RunConfig:
    """Build a validated RunConfig from JSON text plus key=value overrides.

    Unknown keys are rejected; range violations name the offending field.
    """
    try:
        raw = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be an object")
    merged: dict = {}
    for key, value in raw.items():
        merged[key] = _coerce(key, value)
    for token in overrides or []:
        if "=" not in token:
            raise ConfigError(f"override {token!r}: expected key=value")
        key, _, value = token.partition("=")
        merged[key.strip()] = _coerce(key.strip(), value.strip())
    if mode is not None:
        merged["mode"] = mode
    if "mode" not in merged:
        raise ConfigError("mode: required")
    return RunConfig(**merged).validate()


def _expr_field(expr: str, config_key: str):
    """Compile an initial-condition expression of (y, zeta)."""
    try:
        code = compile(expr, f"<{config_key}>", "eval")
    except SyntaxError as exc:
        raise ConfigError(f"{config_key}: bad expression ({exc})") from exc

    def func(y, zeta=0.0):
        names = dict(_EXPR_NAMES)
        names["y"] = np.asarray(y, dtype=float)
        names["zeta"] = np.asarray(zeta, dtype=float)
        out = eval(code, {"__builtins__": {}}, names)
        return np.broadcast_to(np.asarray(out, dtype=float),
                               np.broadcast(names["y"], names["zeta"]).shape).copy()
    return func


def _spec_from_config(cfg: RunConfig) -> experiments.ExperimentSpec:
    if cfg.ic_h is not None:
        h_fn = _expr_field(cfg.ic_h, "ic_h")
        u_fn = _expr_field(cfg.ic_u or "0.0", "ic_u")
        v_fn = _expr_field(cfg.ic_v or "0.0", "ic_v")
        hb_fn = _expr_field(cfg.ic_hb or "0.0", "ic_hb")
        spec = experiments.ExperimentSpec(
            example=0, case="custom",
            y_min=cfg.y_min if cfg.y_min is not None else -1.0,
            y_max=cfg.y_max if cfg.y_max is not None else 1.0,
            n_cells=cfg.n_cells or 200, n_zeta=cfg.n_zeta or 100,
            t_final=cfg.final_time if cfg.final_time is not None else 1.0,
            boundary=cfg.boundary or "periodic",
            nu=cfg.nu, theta=cfg.theta, g=cfg.g,
            f_const=cfg.f if cfg.f is not None else 0.0,
            profile_y0=0.0,
            height=lambda y: h_fn(y),
            u_field=u_fn,
            v_profile=lambda z: v_fn(0.0, z),
            hb_profile=lambda z: hb_fn(0.0, z))
    else:
        spec = experiments.make_spec(cfg.example, cfg.case or "constant")
        if cfg.n_cells:
            spec.n_cells = cfg.n_cells
        if cfg.n_zeta:
            spec.n_zeta = cfg.n_zeta
        if cfg.final_time is not None:
            spec.t_final = cfg.final_time
        if cfg.f is not None:
            spec.f_const = cfg.f
        spec.nu = cfg.nu
        spec.theta = cfg.theta if cfg.example != 1 else spec.theta
        spec.g = cfg.g
        if cfg.boundary:
            spec.boundary = cfg.boundary
    return spec


def _manifest(out_dir: Path, cfg: RunConfig, wall: float, steps: dict,
              max_im_ratio: float, artifacts: list[Path]) -> None:
    payload = {
        "version": __version__,
        "mode": cfg.mode,
        "config": {k: v for k, v in vars(cfg).items() if v is not None},
        "wall_time_s": wall,
        "n_steps": steps,
        "max_im_ratio": max_im_ratio,
        "artifacts": {str(p.relative_to(out_dir)): file_sha256(p)
                      for p in sorted(artifacts)},
    }
    write_manifest(out_dir / "manifest.json", payload)


def _cmd_tensors(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tic = time.perf_counter()
    tensors = closure.build_tensors(cfg.order)
    artifacts = []
    if cfg.format == "csv":
        for name, arr in (("A", tensors.A), ("B", tensors.B)):
            path = out / f"tensor_{name}.csv"
            idx = np.indices(arr.shape).reshape(3, -1) + 1
            write_csv(path, ["i", "l", "n", "value"],
                      [idx[0], idx[1], idx[2], arr.reshape(-1)])
            artifacts.append(path)
        path = out / "tensor_Gamma.csv"
        idx = np.indices(tensors.Gamma.shape).reshape(2, -1) + 1
        write_csv(path, ["i", "l", "value"],
                  [idx[0], idx[1], tensors.Gamma.reshape(-1)])
        artifacts.append(path)
        path = out / "phi_at_one.csv"
        write_csv(path, ["l", "value"],
                  [np.arange(1, cfg.order + 1), tensors.phi_at_one])
        artifacts.append(path)
    else:
        path = out / "tensors.json"
        payload = {
            "order": cfg.order,
            "A": [[[format_float(v) for v in row] for row in mat] for mat in tensors.A],
            "B": [[[format_float(v) for v in row] for row in mat] for mat in tensors.B],
            "Gamma": [[format_float(v) for v in row] for row in tensors.Gamma],
            "phi_at_one": [format_float(v) for v in tensors.phi_at_one],
        }
        write_manifest(path, payload)
        artifacts.append(path)
    _manifest(out, cfg, time.perf_counter() - tic, {}, 0.0, artifacts)
    return EXIT_OK


def _cmd_run_moment(cfg: RunConfig) -> int:
    spec = _spec_from_config(cfg)
    out = Path(cfg.out_dir)
    tic = time.perf_counter()
    params = experiments.model_params(spec, cfg.order)
    params.tol_im = cfg.tol_im
    sol = experiments.initial_moment_solution(spec, cfg.order)
    artifacts = []
    snap_times = sorted(set(cfg.snapshot_times) | {spec.t_final})
    max_ratio = 0.0
    n_steps = 0
    for t_snap in snap_times:
        if t_snap > sol.time:
            sol, stats = fv1d.run(sol, params, t_snap, nu=spec.nu, theta=spec.theta)
            max_ratio = max(max_ratio, stats.max_im_ratio)
            n_steps += stats.n_steps
        path = experiments.moment_snapshot_path(out, spec, cfg.order, t_snap)
        experiments.write_moment_snapshot(path, sol, cfg.order)
        artifacts.append(path)
    _manifest(out, cfg, time.perf_counter() - tic,
              {"moment": n_steps}, max_ratio, artifacts)
    return EXIT_OK


def _cmd_run_reference(cfg: RunConfig) -> int:
    spec = _spec_from_config(cfg)
    out = Path(cfg.out_dir)
    tic = time.perf_counter()
    sol = experiments.initial_reference_solution(spec)
    params = experiments.ref_params(spec)
    base = out / f"example{spec.example}" / spec.case / "reference"
    artifacts = []
    n_steps = 0
    snap_times = sorted(set(cfg.snapshot_times) | {spec.t_final})
    for t_snap in snap_times:
        if t_snap > sol.time:
            sol, stats = ref2d.run2d(sol, params, t_snap, nu=spec.nu, theta=spec.theta)
            n_steps += stats.n_steps
        tag = experiments.format_time(t_snap)
        path = base / f"snapshot_t{tag}.csv"
        experiments.write_reference_snapshot(path, sol)
        artifacts.append(path)
        path = base / f"depth_averaged_t{tag}.csv"
        experiments.write_depth_averaged(path, sol)
        artifacts.append(path)
    _, zeta, prim = ref2d.profile_slice(sol, spec.profile_y0)
    path = base / f"profiles_y{spec.profile_y0:g}.csv"
    write_csv(path, ["zeta", "v", "b"], [zeta, prim[:, 2], prim[:, 4]])
    artifacts.append(path)
    _manifest(out, cfg, time.perf_counter() - tic,
              {"reference": n_steps}, 0.0, artifacts)
    return EXIT_OK


def _cmd_compare(cfg: RunConfig) -> int:
    spec = _spec_from_config(cfg)
    # example 3's initial data is non-hyperbolic at M=2; skip it by default
    orders = cfg.orders or ([0, 1, 3] if spec.example == 3 else [0, 1, 2, 3])
    out = Path(cfg.out_dir)
    tic = time.perf_counter()
    result = experiments.run_comparison(spec, orders)
    artifacts = experiments.write_comparison_outputs(result, out)
    steps = {"reference": result.ref_stats.n_steps}
    steps.update({f"M{m}": s.n_steps for m, s in result.moment_stats.items()})
    _manifest(out, cfg, time.perf_counter() - tic, steps,
              result.max_im_ratio, artifacts)
    return EXIT_OK


def _cmd_scan(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tic = time.perf_counter()
    scan = hyperbolicity.scan_region((cfg.b_min, cfg.b_max),
                                     (cfg.beta_min, cfg.beta_max),
                                     (cfg.eta_min, cfg.eta_max),
                                     cfg.resolution, cfg.gh)
    path = out / "hyperbolicity_scan.csv"
    scan.write_csv(path)
    _manifest(out, cfg, time.perf_counter() - tic,
              {"samples": int(scan.hyperbolic.size)}, 0.0, [path])
    return EXIT_OK


_COMMANDS = {
    "tensors": _cmd_tensors,
    "run-moment": _cmd_run_moment,
    "run-reference": _cmd_run_reference,
    "compare": _cmd_compare,
    "hyperbolicity-scan": _cmd_scan,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mrswm",
        description="Moment-closure solvers for magnetic rotating shallow water flow")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        p.add_argument("settings", nargs="*", metavar="key=value",
                       help="configuration entries")
        p.add_argument("--config", type=Path, help="JSON configuration file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--override", action="append", default=[],
                       metavar="key=value", help="final overrides")
        if mode == "tensors":
            p.add_argument("--order", type=int)
            p.add_argument("--format", choices=("csv", "json"))
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        text = args.config.read_text() if args.config else ""
        overrides = list(args.settings) + list(args.override)
        if getattr(args, "order", None) is not None:
            overrides.append(f"order={args.order}")
        if getattr(args, "format", None):
            overrides.append(f"format={args.format}")
        if args.out:
            overrides.append(f"out_dir={args.out}")
        cfg = parse_config(text, mode=args.mode, overrides=overrides)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "exit": EXIT_CONFIG,
                          "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _COMMANDS[cfg.mode](cfg)
    except HyperbolicityError as exc:
        print(json.dumps({"error": "hyperbolicity", "exit": EXIT_HYPERBOLICITY,
                          "message": str(exc), "ratio": exc.ratio}), file=sys.stderr)
        return EXIT_HYPERBOLICITY
    except (SolverError, ValueError) as exc:
        print(json.dumps({"error": "solver", "exit": EXIT_SOLVER,
                          "message": str(exc)}), file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
