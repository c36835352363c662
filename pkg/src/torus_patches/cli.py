"""Command-line front end.

    torus-patches identities --rho 0.3
    torus-patches green eval --rho 0.3 --x 1 0.5 --y 2 0.1
    torus-patches equilibrium ring --rho 0.3 --N 4
    torus-patches patch solve --rho 0.3 --N 3 --eps 0.05

Every command writes a JSON manifest (and CSV data where relevant) into the
output directory: --output-dir, else $TORUS_PATCHES_OUTPUT_DIR, else the
config's "output_dir", else ./torus_patches_out.  A JSON config given with
--config supplies defaults; explicit flags win.

Exit codes: 0 ok, 2 configuration fault, 3 numerical failure, 4 identity failure.
"""

from __future__ import annotations

import argparse
import cmath
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .contour import GeometryError, MultiPatchProblem, SingleLayerProblem
from .green import TorusGeometry, green_eval, grad_H, regular_part_H, robin_constant
from .point_vortex import (
    NoConvergence,
    VortexConfiguration,
    centralized_ring,
    equilibrium_report,
    find_equilibrium,
    ring_configuration,
)
from .solver import (
    NewtonDivergence,
    SolveSettings,
    centralization_error,
    continue_in_eps,
    decay_diagnostic,
    min_scaled_curvature,
    solve_multi,
    solve_single,
)
from .spectral import grid, log_sine_convolution
from .torus_special import (
    SingularityError,
    TruncationError,
    TruncationPolicy,
    eval_K,
    eval_P,
)

SCHEMA_VERSION = 1
OUTPUT_ENV = "TORUS_PATCHES_OUTPUT_DIR"
DEFAULT_OUTPUT = "torus_patches_out"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IDENTITY = 4

NUMERICAL_ERRORS = (
    NoConvergence,
    NewtonDivergence,
    GeometryError,
    SingularityError,
    TruncationError,
    np.linalg.LinAlgError,
)


class ConfigError(ValueError):
    pass


# --- configuration ----------------------------------------------------------------


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def _merge(args: argparse.Namespace, config: dict) -> dict:
    """Config values overridden by every flag the user actually set."""
    merged = dict(config)
    for key, value in vars(args).items():
        if key in ("func", "config", "command", "action") or value is None:
            continue
        merged[key] = value
    return merged


def _require(cfg: dict, key: str):
    if cfg.get(key) is None:
        raise ConfigError(f"missing required field '{key}'")
    return cfg[key]


def _float(cfg: dict, key: str, default=None) -> float:
    value = cfg.get(key, default)
    if value is None:
        raise ConfigError(f"missing required field '{key}'")
    try:
        return float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field '{key}' must be a number, got {value!r}") from exc


def _int(cfg: dict, key: str, default=None) -> int:
    value = cfg.get(key, default)
    if value is None:
        raise ConfigError(f"missing required field '{key}'")
    if isinstance(value, bool) or int(value) != value:
        raise ConfigError(f"field '{key}' must be an integer, got {value!r}")
    return int(value)


def _geometry(cfg: dict) -> TorusGeometry:
    rho = _float(cfg, "rho")
    if not 0.0 < rho < 1.0:
        raise ConfigError(f"rho must lie in (0, 1), got {rho}")
    tol = _float(cfg, "series_tol", 1e-14)
    try:
        return TorusGeometry(rho, TruncationPolicy(tol=tol))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _settings(cfg: dict, multi: bool = False) -> SolveSettings:
    base = SolveSettings(J=16, M=128) if multi else SolveSettings()
    grid_ = cfg.get("eps_grid")
    if isinstance(grid_, str):
        grid_ = [float(x) for x in grid_.split(",") if x.strip()]
    try:
        return SolveSettings(
            tol_residual=_float(cfg, "tol", base.tol_residual),
            max_newton=_int(cfg, "max_newton", base.max_newton),
            M=_int(cfg, "M", base.M),
            J=_int(cfg, "J", base.J),
            k=_int(cfg, "k", base.k),
            fd_step=_float(cfg, "fd_step", base.fd_step),
            eps_grid=tuple(grid_) if grid_ is not None else base.eps_grid,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _output_dir(cfg: dict) -> Path:
    out = cfg.get("output_dir") if cfg.get("_flag_output_dir") else None
    out = out or os.environ.get(OUTPUT_ENV) or cfg.get("output_dir") or DEFAULT_OUTPUT
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _echo(cfg: dict) -> dict:
    return {k: v for k, v in sorted(cfg.items()) if not k.startswith("_") and k != "output_dir"}


# --- output -----------------------------------------------------------------------


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def _dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _manifest(command: str, cfg: dict, result: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": _echo(cfg),
        "versions": {"torus_patches": __version__, "numpy": np.__version__},
        "seeds": {},
        "result": result,
    }


def _write_json(path: Path, obj) -> None:
    path.write_text(_dumps(obj))


def write_boundary_csv(path: Path, center, curve, eps: float) -> None:
    """Columns s,x1,x2,R on the curve's grid, 17 significant digits."""
    M = curve.grid_size
    s = grid(M)
    R = 1.0 + eps * curve.samples()
    x1 = center[0] + eps * R * np.cos(s)
    x2 = center[1] + eps * R * np.sin(s)
    rows = np.column_stack([s, x1, x2, R])
    with open(path, "w") as fh:
        fh.write("s,x1,x2,R\n")
        for row in rows:
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def _emit(out: Path, name: str, manifest: dict) -> None:
    _write_json(out / name, manifest)
    sys.stdout.write(_dumps(manifest["result"]))


# --- identities -------------------------------------------------------------------


def identity_battery(rho: float, tol: float = 1e-12) -> list[dict]:
    """Special-function and quadrature identities with their maximum errors."""
    policy = TruncationPolicy()
    K = lambda z: eval_K(z, rho, policy)  # noqa: E731
    theta = 2 * np.pi * (np.arange(1, 24) + 0.37) / 24.0
    unit = np.exp(1j * theta)
    shells = np.concatenate([unit * rho**0.5, unit * rho**0.25, unit])
    checks = {
        "K(-1) = 1/2": abs(K(-1.0) - 0.5),
        "K(rho z) - K(z) = -1": np.max(np.abs(K(rho * shells) - K(shells) + 1.0)),
        "K(1/z) + K(rho z) = 0": np.max(np.abs(K(1.0 / shells) + K(rho * shells))),
        "K(z) + K(conj z) = 1 on |z| = 1": np.max(np.abs(K(unit) + K(np.conj(unit)) - 1.0)),
        "P(1/z) = -P(z)/z": np.max(
            np.abs(eval_P(1.0 / shells, rho, policy) + eval_P(shells, rho, policy) / shells)
        ),
    }
    M = 256
    s = grid(M)
    worst = 0.0
    for m in range(1, 65):
        conv = log_sine_convolution(np.cos(m * s))
        worst = max(worst, np.max(np.abs(conv - np.cos(m * s) / m)))
    checks["mean of cos(mt) log(1/(4 sin^2(t/2))) = 1/|m|, m <= 64"] = worst
    checks["H(x, x) = Robin constant"] = abs(
        regular_part_H([1.0, 0.2], [1.0, 0.2], TorusGeometry(rho, policy)) - robin_constant(rho, policy)
    )
    return [
        {"identity": name, "max_error": float(err), "pass": bool(err <= tol)} for name, err in checks.items()
    ]


def cmd_identities(cfg: dict) -> int:
    geom = _geometry(cfg)
    tol = _float(cfg, "tol", 1e-12)
    results = identity_battery(geom.rho, tol)
    out = _output_dir(cfg)
    _emit(out, "identities.json", _manifest("identities", cfg, {"identities": results}))
    return EXIT_OK if all(r["pass"] for r in results) else EXIT_IDENTITY


# --- green ------------------------------------------------------------------------


def _point(cfg: dict, key: str) -> np.ndarray:
    value = _require(cfg, key)
    try:
        p = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field '{key}' must be two numbers") from exc
    if p.shape != (2,):
        raise ConfigError(f"field '{key}' must be two numbers")
    return p


def cmd_green(cfg: dict) -> int:
    geom = _geometry(cfg)
    x, y = _point(cfg, "x"), _point(cfg, "y")
    result = {
        "G": green_eval(x, y, geom),
        "H": regular_part_H(x, y, geom),
        "grad_H_first": grad_H(x, y, geom, "first"),
        "grad_H_second": grad_H(x, y, geom, "second"),
        "robin_constant": robin_constant(geom.rho, geom.policy),
    }
    out = _output_dir(cfg)
    n = cfg.get("grid")
    if n:
        n = _int(cfg, "grid")
        # cell-centred nodes, so the source never falls on a node unless placed there
        g1 = (np.arange(n) + 0.5) * geom.width / n
        g2 = (np.arange(n) + 0.5) * geom.height / n
        with open(out / "green_grid.csv", "w") as fh:
            fh.write("x1,x2,G\n")
            for a in g1:
                for b in g2:
                    try:
                        val = green_eval([a, b], y, geom)
                    except SingularityError:
                        val = float("nan")
                    fh.write("%.17g,%.17g,%.17g\n" % (a, b, val))
        result["grid_csv"] = "green_grid.csv"
    _emit(out, "green.json", _manifest("green eval", cfg, result))
    return EXIT_OK


# --- equilibrium ------------------------------------------------------------------


def _configuration(cfg: dict, geom: TorusGeometry) -> VortexConfiguration:
    centers = _require(cfg, "centers")
    c = np.asarray(centers, dtype=float)
    if c.ndim != 2 or c.shape[1] != 2:
        raise ConfigError("centers must be a list of [x1, x2] pairs")
    k = cfg.get("circulations")
    k = np.ones(c.shape[0]) if k is None else np.asarray(k, dtype=float)
    if k.shape != (c.shape[0],):
        raise ConfigError("need one circulation per center")
    return VortexConfiguration(c, k, geom)


def _ring(cfg: dict, geom: TorusGeometry) -> VortexConfiguration:
    N = _int(cfg, "N")
    if N < 1:
        raise ConfigError("N must be >= 1")
    d = _float(cfg, "d", math.pi / N)
    h = _float(cfg, "h", geom.height / 2)
    try:
        return ring_configuration(N, d, h, geom)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_equilibrium(cfg: dict) -> int:
    geom = _geometry(cfg)
    action = cfg["_action"]
    if action == "ring":
        conf = _ring(cfg, geom)
    else:
        conf = _configuration(cfg, geom)
    if action == "find":
        conf = find_equilibrium(conf, tol=_float(cfg, "tol", 1e-12))
    report = equilibrium_report(conf)
    result = report.to_dict()
    result["centers"] = conf.centers
    result["circulations"] = conf.circulations
    _emit(_output_dir(cfg), f"equilibrium_{action}.json", _manifest(f"equilibrium {action}", cfg, result))
    return EXIT_OK


# --- patch ------------------------------------------------------------------------


def _single_problem(cfg: dict, geom: TorusGeometry, settings: SolveSettings) -> SingleLayerProblem:
    N = _int(cfg, "N")
    if N < 1:
        raise ConfigError("N must be >= 1")
    try:
        return SingleLayerProblem(
            N,
            _float(cfg, "d", math.pi / N),
            _float(cfg, "h", geom.height / 2),
            _float(cfg, "gamma", N * math.pi),
            _float(cfg, "eps", 0.0),
            geom,
            settings.M,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _write_row(out: Path, prefix: str, p: SingleLayerProblem, curve, eps: float) -> list[str]:
    names = []
    for n, c in enumerate(p.centers):
        name = f"{prefix}patch{n}.csv"
        write_boundary_csv(out / name, c, curve, eps)
        names.append(name)
    return names


def cmd_patch(cfg: dict) -> int:
    geom = _geometry(cfg)
    action = cfg["_action"]
    out = _output_dir(cfg)
    if action == "multi":
        return _cmd_multi(cfg, geom, out)
    settings = _settings(cfg)
    p = _single_problem(cfg, geom, settings)
    if action == "solve":
        eps = _float(cfg, "eps")
        sol = solve_single(p.with_eps(eps), settings)
        result = {
            "eps": eps,
            "gamma": sol.gamma,
            "gamma_minus_N_pi": sol.gamma - p.N * math.pi,
            "curve": sol.curve.to_dict(),
            "residual_norm": sol.residual_norm,
            "newton_steps": sol.iterations,
            "history": sol.history,
            "min_scaled_curvature": min_scaled_curvature(sol.curve, eps),
            "decay_rate": decay_diagnostic(sol.curve),
            "settings": settings.to_dict(),
        }
        result["boundaries"] = _write_row(out, "boundary_", p, sol.curve, eps)
        _emit(out, "patch_solve.json", _manifest("patch solve", cfg, result))
        return EXIT_OK
    run = continue_in_eps(p, settings)
    result = run.to_dict()
    result["settings"] = settings.to_dict()
    files = []
    for i, state in enumerate(run.states):
        files.append(_write_row(out, f"state{i:02d}_", p, state.curves[0], state.eps))
    result["boundaries"] = files
    _emit(out, "patch_continue.json", _manifest("patch continue", cfg, result))
    return EXIT_OK if run.completed else EXIT_NUMERICAL


def _cmd_multi(cfg: dict, geom: TorusGeometry, out: Path) -> int:
    settings = _settings(cfg, multi=True)
    if cfg.get("centers") is not None:
        conf = _configuration(cfg, geom)
        kappa = conf.circulations
    else:
        conf = centralized_ring(_int(cfg, "N"), geom) if cfg.get("d") is None else _ring(cfg, geom)
        kappa = np.full(conf.N, math.pi)
        if cfg.get("circulations") is not None:
            kappa = np.asarray(cfg["circulations"], dtype=float)
    eps = _float(cfg, "eps")
    try:
        p = MultiPatchProblem(conf.centers, kappa, eps, geom, settings.M)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    sol = solve_multi(p, settings)
    result = {
        "eps": eps,
        "initial_centers": conf.centers,
        "centers": sol.centers,
        "circulations": kappa,
        "center_shift": float(np.max(np.abs(sol.centers - conf.centers))),
        "centralization_error": centralization_error(sol.centers, geom),
        "curves": [u.to_dict() for u in sol.curves],
        "residual_norm": sol.residual_norm,
        "first_mode_max": sol.first_mode_max,
        "outer_iterations": sol.iterations,
        "history": sol.history,
        "min_scaled_curvature": min(min_scaled_curvature(u, eps) for u in sol.curves),
        "settings": settings.to_dict(),
        "boundaries": [],
    }
    for n, (c, u) in enumerate(zip(sol.centers, sol.curves)):
        name = f"boundary_patch{n}.csv"
        write_boundary_csv(out / name, c, u, eps)
        result["boundaries"].append(name)
    _emit(out, "patch_multi.json", _manifest("patch multi", cfg, result))
    return EXIT_OK


# --- parser -----------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config supplying defaults")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--rho", type=float)
    p.add_argument("--series-tol", dest="series_tol", type=float, help="product/series tail tolerance")


def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--N", type=int)
    p.add_argument("--d", type=float, help="horizontal offset of the row (default pi/N)")
    p.add_argument("--h", type=float, help="height of the row (default -log(rho)/2)")
    p.add_argument("--eps", type=float)
    p.add_argument("--M", type=int, help="grid size")
    p.add_argument("--J", type=int, help="retained Fourier modes")
    p.add_argument("--k", type=int, help="Sobolev index")
    p.add_argument("--tol", type=float, help="residual tolerance")
    p.add_argument("--max-newton", dest="max_newton", type=int)
    p.add_argument("--fd-step", dest="fd_step", type=float)


def _json_arg(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"not valid JSON: {text}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="torus-patches", description="Vortex patches on the flat torus.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("identities", help="special-function identity battery")
    _common(p)
    p.add_argument("--tol", type=float)
    p.set_defaults(func=cmd_identities)

    green = sub.add_parser("green", help="Green function evaluation").add_subparsers(dest="action", required=True)
    p = green.add_parser("eval")
    _common(p)
    p.add_argument("--x", type=float, nargs=2)
    p.add_argument("--y", type=float, nargs=2)
    p.add_argument("--grid", type=int, help="also write G(., y) on a grid x grid CSV")
    p.set_defaults(func=cmd_green)

    eq = sub.add_parser("equilibrium", help="point-vortex equilibria").add_subparsers(dest="action", required=True)
    for name in ("ring", "check", "find"):
        p = eq.add_parser(name)
        _common(p)
        p.add_argument("--N", type=int)
        p.add_argument("--d", type=float)
        p.add_argument("--h", type=float)
        p.add_argument("--centers", type=_json_arg, help='JSON list, e.g. "[[1,0.5],[3,0.5]]"')
        p.add_argument("--circulations", type=_json_arg)
        p.add_argument("--tol", type=float)
        p.set_defaults(func=cmd_equilibrium)

    patch = sub.add_parser("patch", help="vortex patch solves").add_subparsers(dest="action", required=True)
    for name in ("solve", "continue", "multi"):
        p = patch.add_parser(name)
        _common(p)
        _solver_flags(p)
        if name == "continue":
            p.add_argument("--eps-grid", dest="eps_grid", help="comma-separated, starting at 0")
        if name == "multi":
            p.add_argument("--centers", type=_json_arg)
            p.add_argument("--circulations", type=_json_arg)
        else:
            p.add_argument("--gamma", type=float)
        p.set_defaults(func=cmd_patch)
    return parser


def _error_record(kind: str, exc: Exception) -> dict:
    return {"schema_version": SCHEMA_VERSION, "error": kind, "type": type(exc).__name__, "message": str(exc)}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _merge(args, _load_config(args.config))
        cfg["_action"] = getattr(args, "action", None)
        cfg["_flag_output_dir"] = args.output_dir is not None
        return args.func(cfg)
    except ConfigError as exc:
        sys.stderr.write(_dumps(_error_record("config", exc)))
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        record = _error_record("numerical", exc)
        sys.stderr.write(_dumps(record))
        try:
            _write_json(_output_dir(cfg) / "error.json", record)
        except OSError:
            pass
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
