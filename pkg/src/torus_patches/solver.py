"""Newton solves for patch equilibria and continuation in the patch size eps.

Single row: unknowns are the cosine coefficients a_2..a_J of u (R = 1 + eps u).
The background circulation gamma is eliminated inside every residual
evaluation so that the first sine mode vanishes; the remaining modes are
driven to zero by Newton with a finite-difference Jacobian, right-preconditioned
by the exact disk linearisation cos(js) -> ((j-1)/2) sin(js).

Several patches: the centers are eliminated instead of gamma (first sine and
cosine modes of every patch), inside the centralized subspace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .contour import (
    GeometryError,
    MultiPatchProblem,
    SingleLayerProblem,
    assemble_multi,
    assemble_single,
)
from .point_vortex import NoConvergence, centralized_sums, constraint_basis
from .spectral import (
    FourierCurve,
    analyze,
    derivative,
    project_drop_first,
    sobolev_norm,
    validate_sobolev_index,
)

DEGENERATE_SENSITIVITY = 1e-14
DECAY_FLOOR = 1e-12


class NewtonDivergence(RuntimeError):
    """The Newton residual blew up or stopped being finite."""


def default_eps_grid() -> tuple[float, ...]:
    return (0.0,) + tuple(float(e) for e in np.geomspace(1e-3, 0.08, 12))


@dataclass(frozen=True)
class SolveSettings:
    tol_residual: float = 1e-10
    max_newton: int = 6
    M: int = 256
    J: int = 32
    k: int = 3
    fd_step: float = 1e-6
    eps_grid: tuple[float, ...] = field(default_factory=default_eps_grid)
    max_outer: int = 30
    center_tol: float = 1e-13

    def __post_init__(self):
        if not self.tol_residual > 0:
            raise ValueError("tol_residual must be positive")
        if self.max_newton < 1:
            raise ValueError("max_newton must be >= 1")
        if self.M < 4 * self.J:
            raise ValueError(f"need M >= 4J, got M={self.M}, J={self.J}")
        if self.J < 2:
            raise ValueError("J must be >= 2")
        validate_sobolev_index(self.k)
        grid = tuple(float(e) for e in self.eps_grid)
        if not grid or grid[0] != 0.0 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("eps grid must start at 0 and increase strictly")
        object.__setattr__(self, "eps_grid", grid)

    def to_dict(self) -> dict:
        return {
            "tol_residual": self.tol_residual,
            "max_newton": self.max_newton,
            "M": self.M,
            "J": self.J,
            "k": self.k,
            "fd_step": self.fd_step,
            "eps_grid": list(self.eps_grid),
            "max_outer": self.max_outer,
            "center_tol": self.center_tol,
        }


def _norm(residual: FourierCurve, k: int) -> float:
    return sobolev_norm(project_drop_first(residual), k - 1)


def _diag(J: int) -> np.ndarray:
    return 0.5 * (np.arange(2, J + 1) - 1.0)


# --- single row -------------------------------------------------------------------


def _gamma_split(p: SingleLayerProblem, u: FourierCurve, modes: int):
    """Residual parts with the background written as gamma * (unit-gamma F4)."""
    r = assemble_single(p.with_gamma(1.0), u, modes)
    unit = r.samples["F4"]
    rest = r.samples["total"] - unit
    return rest, unit


def _gamma_from_split(rest: np.ndarray, unit: np.ndarray, modes: int) -> float:
    b4 = analyze(unit, modes).sin_coeffs[0]
    if abs(b4) < DEGENERATE_SENSITIVITY:
        raise GeometryError(f"background has no sin(s) sensitivity ({b4:.3e}); gamma undetermined")
    return float(-analyze(rest, modes).sin_coeffs[0] / b4)


def solve_gamma(p: SingleLayerProblem, u: FourierCurve, modes: int | None = None) -> float:
    """Background circulation that cancels the sin(s) mode of the residual.

    The residual is affine in gamma, so a single assembly at gamma = 1 suffices.
    """
    modes = p.M // 4 if modes is None else modes
    return _gamma_from_split(*_gamma_split(p, u, modes), modes)


def _eliminated_residual(p: SingleLayerProblem, u: FourierCurve, J: int, eliminate: bool = True):
    rest, unit = _gamma_split(p, u, J)
    gamma = _gamma_from_split(rest, unit, J) if eliminate else float(p.gamma)
    return gamma, analyze(rest + gamma * unit, J)


@dataclass
class SingleSolution:
    gamma: float
    curve: FourierCurve
    residual_norm: float
    iterations: int
    history: list[float]

    def __iter__(self):
        yield self.gamma
        yield self.curve


def _cos_curve(a: np.ndarray, M: int) -> FourierCurve:
    return FourierCurve.cosine(a, M)


def solve_single(
    p: SingleLayerProblem,
    settings: SolveSettings = SolveSettings(),
    initial: FourierCurve | None = None,
    eliminate_gamma: bool = True,
) -> SingleSolution:
    """Cosine-only u with the projected residual below settings.tol_residual.

    With eliminate_gamma=False the background stays at p.gamma; this is the
    right choice for N = 1, where gamma has no lever on the sin(s) mode.
    """
    J, M, k = settings.J, settings.M, settings.k
    p = replace(p, M=M)
    a = np.zeros(J)
    if initial is not None:
        a[1:] = initial.truncated(J).cos_coeffs[1:]

    def evaluate(a_):
        gamma, res = _eliminated_residual(p, _cos_curve(a_, M), J, eliminate_gamma)
        return gamma, res, res.sin_coeffs[1:]

    gamma, res, r = evaluate(a)
    history = [_norm(res, k)]
    diag = _diag(J)
    steps = 0
    while history[-1] > settings.tol_residual:
        if steps == settings.max_newton:
            raise NoConvergence(
                f"projected residual {history[-1]:.3e} after {steps} Newton steps at eps={p.eps}"
            )
        jac = np.empty((J - 1, J - 1))
        for col in range(J - 1):
            trial = a.copy()
            trial[col + 1] += settings.fd_step
            jac[:, col] = (evaluate(trial)[2] - r) / settings.fd_step
        z = np.linalg.solve(jac / diag, -r)
        a[1:] += z / diag
        gamma, res, r = evaluate(a)
        history.append(_norm(res, k))
        steps += 1
        if not np.isfinite(history[-1]) or history[-1] > 1e3 * max(history[0], 1e-3):
            raise NewtonDivergence(f"Newton residual grew to {history[-1]:.3e} at eps={p.eps}")
    return SingleSolution(gamma, _cos_curve(a, M), history[-1], steps, history)


# --- several patches --------------------------------------------------------------


def _first_modes(residuals) -> np.ndarray:
    return np.concatenate([[r.total.sin_coeffs[0], r.total.cos_coeffs[0]] for r in residuals])


def solve_centers(
    p: MultiPatchProblem,
    us: list[FourierCurve],
    tol: float = 1e-13,
    max_iter: int = 30,
    fd_step: float = 1e-7,
) -> np.ndarray:
    """Centers that annihilate the first sine and cosine modes of every patch residual.

    Moves are restricted to displacements that keep both coordinate sums
    fixed, so a centralized start stays centralized.  The 2N equations in
    2N - 2 unknowns are solved in the least-squares sense: they are only
    consistent once the higher modes vanish too, so while the curves are still
    moving the iteration stops at the least-squares point.
    """
    n = p.N
    J = us[0].J
    x = p.centers.ravel().copy()
    if n == 1:
        return p.centers.copy()
    basis = constraint_basis(n)

    def resid(flat):
        return _first_modes(assemble_multi(p.with_centers(flat.reshape(-1, 2)), us, J))

    r = resid(x)
    for _ in range(max_iter):
        if np.max(np.abs(r)) <= tol:
            return x.reshape(-1, 2)
        jac = np.empty((r.size, basis.shape[1]))
        for j in range(basis.shape[1]):
            step = fd_step * basis[:, j]
            jac[:, j] = (resid(x + step) - resid(x - step)) / (2 * fd_step)
        sv = np.linalg.svd(jac, compute_uv=False)
        if sv[-1] <= 1e-10 * sv[0]:
            raise NoConvergence("center Jacobian is rank deficient beyond translations")
        dy = np.linalg.lstsq(jac, -r, rcond=None)[0]
        if np.linalg.norm(dy) <= 1e-14 * (1.0 + np.linalg.norm(x)):
            return x.reshape(-1, 2)
        lam, base = 1.0, np.linalg.norm(r)
        for _ in range(31):
            trial = x + lam * (basis @ dy)
            rt = resid(trial)
            if np.linalg.norm(rt) < base:
                break
            lam *= 0.5
        else:
            # no descent left: least-squares point reached
            return x.reshape(-1, 2)
        x, r = trial, rt
    raise NoConvergence(f"center iteration still moving after {max_iter} steps, max first mode {np.max(np.abs(r)):.3e}")


@dataclass
class MultiSolution:
    centers: np.ndarray
    curves: list[FourierCurve]
    residual_norm: float
    first_mode_max: float
    iterations: int
    history: list[float]

    def __iter__(self):
        yield self.centers
        yield self.curves


def _pack(us: list[FourierCurve]) -> np.ndarray:
    return np.concatenate([np.concatenate([u.cos_coeffs[1:], u.sin_coeffs[1:]]) for u in us])


def _unpack(v: np.ndarray, n: int, J: int, M: int) -> list[FourierCurve]:
    out = []
    for block in v.reshape(n, 2 * (J - 1)):
        a = np.concatenate([[0.0], block[: J - 1]])
        b = np.concatenate([[0.0], block[J - 1 :]])
        out.append(FourierCurve(a, b, 0.0, M))
    return out


def _higher_modes(residuals) -> np.ndarray:
    return np.concatenate(
        [np.concatenate([r.total.sin_coeffs[1:], r.total.cos_coeffs[1:]]) for r in residuals]
    )


def solve_multi(
    p: MultiPatchProblem,
    settings: SolveSettings = SolveSettings(J=16, M=128),
    initial: list[FourierCurve] | None = None,
) -> MultiSolution:
    """Nested elimination: centers from solve_centers, then a Newton step on the curves.

    The curve Jacobian is taken once at fixed centers and reused (chord
    iteration); it is refreshed when the contraction stalls.  Convergence is
    judged on the modes j >= 2; the leftover first-mode mismatch of the
    least-squares center solve is returned as ``first_mode_max``.  It vanishes
    by symmetry for uniform rings and is O(eps^4) otherwise, because the
    background term uses nominal circulations at the centers rather than the
    patches' exact moments.
    """
    J, M, k, n = settings.J, settings.M, settings.k, p.N
    p = replace(p, M=M)
    us = [FourierCurve.zeros(J, M)] * n if initial is None else [u.truncated(J).regridded(M) for u in initial]
    us = _unpack(_pack(us), n, J, M)
    v = _pack(us)
    # cos(js) -> ((j-1)/2) sin(js) and sin(js) -> -((j-1)/2) cos(js) at the disk
    diag = np.tile(np.concatenate([_diag(J), _diag(J)]), n)

    def evaluate(p_, v_):
        res = assemble_multi(p_, _unpack(v_, n, J, M), J)
        return res, _higher_modes(res)

    jac = None
    history: list[float] = []
    for outer in range(settings.max_outer):
        centers = solve_centers(p, _unpack(v, n, J, M), tol=settings.center_tol)
        p = p.with_centers(centers)
        res, r = evaluate(p, v)
        norm = max(_norm(x.total, k) for x in res)
        first = float(np.max(np.abs(_first_modes(res))))
        history.append(norm)
        if norm <= settings.tol_residual:
            return MultiSolution(p.centers, _unpack(v, n, J, M), norm, first, outer, history)
        if not np.isfinite(norm) or norm > 1e3 * max(history[0], 1e-3):
            raise NewtonDivergence(f"multi-patch residual grew to {norm:.3e}")
        stalled = len(history) > 1 and history[-1] > 0.1 * history[-2]
        if jac is None or stalled:
            jac = np.empty((r.size, v.size))
            for col in range(v.size):
                trial = v.copy()
                trial[col] += settings.fd_step
                jac[:, col] = (evaluate(p, trial)[1] - r) / settings.fd_step
        v = v + np.linalg.lstsq(jac / diag, -r, rcond=None)[0] / diag
    raise NoConvergence(f"multi-patch residual {history[-1]:.3e} after {settings.max_outer} outer iterations")


# --- diagnostics ------------------------------------------------------------------


def curvature(u: FourierCurve, eps: float, s) -> np.ndarray:
    """Curvature of the boundary x = eps R(s) (cos s, sin s), R = 1 + eps u."""
    du = derivative(u)
    ddu = derivative(du)
    R = 1.0 + eps * np.asarray(u(s))
    if np.any(R <= 0):
        raise GeometryError("R(s) must stay positive")
    dR = eps * np.asarray(du(s))
    ddR = eps * np.asarray(ddu(s))
    scaled = (R**2 + 2 * dR**2 - R * ddR) / (R**2 + dR**2) ** 1.5
    if eps == 0:
        return np.full(np.shape(R), math.inf)
    return scaled / eps


def min_scaled_curvature(u: FourierCurve, eps: float, samples: int = 1024) -> float:
    """min over s of eps * kappa(s)."""
    s = 2 * np.pi * np.arange(samples) / samples
    du, ddu = derivative(u), derivative(derivative(u))
    R = 1.0 + eps * u(s)
    dR, ddR = eps * du(s), eps * ddu(s)
    return float(np.min((R**2 + 2 * dR**2 - R * ddR) / (R**2 + dR**2) ** 1.5))


def decay_diagnostic(u: FourierCurve, floor: float = DECAY_FLOOR) -> float:
    """Least-squares slope of log|c_j| against log j over coefficients above the noise floor.

    Mode 1 is excluded (it is pinned to zero). Returns NaN when fewer than two
    coefficients are resolved.
    """
    c = np.hypot(u.cos_coeffs, u.sin_coeffs)
    j = np.arange(1, c.size + 1)
    keep = (j >= 2) & (c > floor)
    if np.count_nonzero(keep) < 2:
        return math.nan
    slope, _ = np.polyfit(np.log(j[keep]), np.log(c[keep]), 1)
    return float(slope)


# --- continuation -----------------------------------------------------------------


@dataclass
class ContinuationState:
    eps: float
    curves: list[FourierCurve]
    residual_norm: float
    min_curvature: float
    decay_rate: float
    iterations: int
    gamma: float | None = None
    centers: np.ndarray | None = None

    def to_dict(self) -> dict:
        out = {
            "eps": self.eps,
            "curves": [c.to_dict() for c in self.curves],
            "residual_norm": self.residual_norm,
            "min_curvature": self.min_curvature,
            "decay_rate": None if math.isnan(self.decay_rate) else self.decay_rate,
            "iterations": self.iterations,
        }
        if self.gamma is not None:
            out["gamma"] = self.gamma
        if self.centers is not None:
            out["centers"] = np.asarray(self.centers).tolist()
        return out


@dataclass
class ContinuationRun:
    states: list[ContinuationState] = field(default_factory=list)
    failure: dict | None = None

    @property
    def completed(self) -> bool:
        return self.failure is None

    def to_dict(self) -> dict:
        return {"states": [s.to_dict() for s in self.states], "failure": self.failure}


def _state_from_single(eps: float, sol: SingleSolution) -> ContinuationState:
    return ContinuationState(
        eps=eps,
        curves=[sol.curve],
        residual_norm=sol.residual_norm,
        min_curvature=min_scaled_curvature(sol.curve, eps),
        decay_rate=decay_diagnostic(sol.curve),
        iterations=sol.iterations,
        gamma=sol.gamma,
    )


def _state_from_multi(eps: float, sol: MultiSolution) -> ContinuationState:
    return ContinuationState(
        eps=eps,
        curves=list(sol.curves),
        residual_norm=sol.residual_norm,
        min_curvature=min(min_scaled_curvature(u, eps) for u in sol.curves),
        decay_rate=max((decay_diagnostic(u) for u in sol.curves), key=lambda x: -math.inf if math.isnan(x) else x),
        iterations=sol.iterations,
        centers=sol.centers,
    )


def continue_in_eps(p, settings: SolveSettings = SolveSettings()) -> ContinuationRun:
    """Warm-started solves along settings.eps_grid; the first failure ends the run and is recorded."""
    run = ContinuationRun()
    multi = isinstance(p, MultiPatchProblem)
    warm = None
    for eps in settings.eps_grid:
        try:
            if multi:
                sol = solve_multi(p.with_eps(eps), settings, warm)
                warm = sol.curves
                run.states.append(_state_from_multi(eps, sol))
            else:
                sol = solve_single(p.with_eps(eps), settings, warm)
                warm = sol.curve
                run.states.append(_state_from_single(eps, sol))
        except (NoConvergence, NewtonDivergence, GeometryError, np.linalg.LinAlgError) as exc:
            run.failure = {"eps": eps, "error": type(exc).__name__, "message": str(exc)}
            break
    return run


def centralization_error(centers, geometry) -> float:
    return float(np.max(np.abs(centralized_sums(centers, geometry))))
