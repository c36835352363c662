"""Point vortices on the torus: Kirchhoff-Routh energy, equilibrium residuals, rings, Hessian rank."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .green import (
    TorusGeometry,
    canonical,
    green_disp,
    min_image,
    robin_constant,
)
from .torus_special import SingularityError, eval_K

TWO_PI = 2.0 * math.pi
HESSIAN_STEP = 1e-4
RANK_TOL = 1e-6


class NoConvergence(RuntimeError):
    """Raised when an iterative solve exhausts its iteration budget."""


@dataclass(frozen=True)
class VortexConfiguration:
    centers: np.ndarray
    circulations: np.ndarray
    geometry: TorusGeometry

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=float))
        k = np.atleast_1d(np.asarray(self.circulations, dtype=float))
        if c.shape[-1] != 2 or c.shape[0] != k.shape[0] or c.shape[0] < 1:
            raise ValueError("need N >= 1 centers (N x 2) and N circulations")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "circulations", k)

    @property
    def N(self) -> int:
        return self.centers.shape[0]

    def annulus_points(self) -> np.ndarray:
        c = canonical(self.centers, self.geometry)
        return np.exp(1j * c[:, 0] - c[:, 1])

    def with_centers(self, centers) -> "VortexConfiguration":
        return VortexConfiguration(np.asarray(centers, float), self.circulations, self.geometry)


@dataclass
class EquilibriumReport:
    residuals: np.ndarray
    max_abs: float
    centralized: bool
    hessian_rank: int
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "residuals": [[float(z.real), float(z.imag)] for z in self.residuals],
            "max_abs": float(self.max_abs),
            "centralized": bool(self.centralized),
            "hessian_rank": int(self.hessian_rank),
            **self.extra,
        }


def _pair_displacements(cfg: VortexConfiguration) -> np.ndarray:
    d = cfg.centers[:, None, :] - cfg.centers[None, :, :]
    return min_image(d, cfg.geometry)


def _check_distinct(d: np.ndarray) -> None:
    n = d.shape[0]
    off = ~np.eye(n, dtype=bool)
    if np.any(np.hypot(d[..., 0], d[..., 1])[off] == 0.0):
        raise SingularityError("coincident vortex centers")


def kirchhoff_routh(cfg: VortexConfiguration) -> float:
    """W = sum_{n<m} k_m k_n G(x_m, x_n) + 1/2 sum k_m^2 H(x_m, x_m)."""
    d = _pair_displacements(cfg)
    _check_distinct(d)
    k = cfg.circulations
    iu = np.triu_indices(cfg.N, 1)
    pair = np.sum(k[iu[0]] * k[iu[1]] * green_disp(d[iu], cfg.geometry)) if cfg.N > 1 else 0.0
    self_part = 0.5 * np.sum(k**2) * robin_constant(cfg.geometry.rho, cfg.geometry.policy)
    return float(pair + self_part)


def equilibrium_residual(cfg: VortexConfiguration) -> np.ndarray:
    """Conjugate complex velocities f_m = v1 - i v2 of each vortex.

    f_m = sum_{n != m} k_n [ K(nu_m/nu_n)/(2pi) - 1/(4pi) + ln|nu_m/nu_n| / (2pi log rho) ]
    """
    geom = cfg.geometry
    d = _pair_displacements(cfg)
    _check_distinct(d)
    n = cfg.N
    out = np.zeros(n, dtype=complex)
    if n == 1:
        return out
    off = ~np.eye(n, dtype=bool)
    ratio = np.exp(1j * d[..., 0] - d[..., 1])
    kk = np.zeros((n, n), dtype=complex)
    kk[off] = eval_K(ratio[off], geom.rho, geom.policy)
    log_ratio = -d[..., 1]
    term = kk / TWO_PI - 1.0 / (4 * math.pi) + log_ratio / (TWO_PI * geom.log_rho)
    term[~off] = 0.0
    return term @ cfg.circulations


def vortex_velocity(cfg: VortexConfiguration, m: int) -> np.ndarray:
    f = equilibrium_residual(cfg)[m]
    return np.array([f.real, -f.imag])


def centralized_sums(centers, geom: TorusGeometry) -> np.ndarray:
    """(sum x1 - N pi, sum x2 + N log(rho)/2) over canonical representatives."""
    c = canonical(centers, geom)
    n = c.shape[0]
    return np.array([c[:, 0].sum() - n * math.pi, c[:, 1].sum() - n * geom.height / 2])


def is_centralized(cfg: VortexConfiguration, tol: float = 1e-10) -> bool:
    return bool(np.all(np.abs(centralized_sums(cfg.centers, cfg.geometry)) <= tol))


def _energy_of_flat(cfg: VortexConfiguration, flat: np.ndarray) -> float:
    return kirchhoff_routh(cfg.with_centers(flat.reshape(-1, 2)))


def energy_gradient(cfg: VortexConfiguration, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of W in the 2N center coordinates."""
    x0 = cfg.centers.ravel()
    g = np.zeros_like(x0)
    for i in range(x0.size):
        e = np.zeros_like(x0)
        e[i] = step
        g[i] = (_energy_of_flat(cfg, x0 + e) - _energy_of_flat(cfg, x0 - e)) / (2 * step)
    return g.reshape(-1, 2)


def energy_hessian(cfg: VortexConfiguration, step: float = HESSIAN_STEP) -> np.ndarray:
    x0 = cfg.centers.ravel()
    n = x0.size
    hess = np.zeros((n, n))
    w0 = _energy_of_flat(cfg, x0)
    eye = np.eye(n) * step
    for i in range(n):
        hess[i, i] = (
            _energy_of_flat(cfg, x0 + eye[i]) - 2 * w0 + _energy_of_flat(cfg, x0 - eye[i])
        ) / step**2
        for j in range(i + 1, n):
            v = (
                _energy_of_flat(cfg, x0 + eye[i] + eye[j])
                - _energy_of_flat(cfg, x0 + eye[i] - eye[j])
                - _energy_of_flat(cfg, x0 - eye[i] + eye[j])
                + _energy_of_flat(cfg, x0 - eye[i] - eye[j])
            ) / (4 * step**2)
            hess[i, j] = hess[j, i] = v
    return hess


def hessian_rank(cfg: VortexConfiguration, tol: float = RANK_TOL) -> int:
    """Numerical rank of the finite-difference Hessian of W (relative SVD threshold)."""
    if cfg.N == 1:
        return 0
    sv = np.linalg.svd(energy_hessian(cfg), compute_uv=False)
    if sv[0] == 0.0:
        return 0
    return int(np.sum(sv > tol * sv[0]))


def ring_configuration(N: int, d: float, h: float, geom: TorusGeometry) -> VortexConfiguration:
    """N unit vortices at (d + 2 pi n / N, h), n = 0..N-1."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if not (0.0 < d < TWO_PI / N):
        raise ValueError(f"d must lie in (0, 2pi/N), got {d!r}")
    if not (0.0 < h < geom.height):
        raise ValueError(f"h must lie in (0, -log rho), got {h!r}")
    n = np.arange(N)
    centers = np.stack([d + TWO_PI * n / N, np.full(N, h)], axis=-1)
    return VortexConfiguration(centers, np.ones(N), geom)


def centralized_ring(N: int, geom: TorusGeometry) -> VortexConfiguration:
    return ring_configuration(N, math.pi / N, geom.height / 2, geom)


def _residual_vector(cfg: VortexConfiguration) -> np.ndarray:
    f = equilibrium_residual(cfg)
    return np.concatenate([f.real, f.imag])


def constraint_basis(n: int) -> np.ndarray:
    """Orthonormal basis of center displacements that keep both coordinate sums fixed."""
    basis = np.zeros((2 * n, 2 * n - 2))
    if n == 1:
        return basis
    q, _ = np.linalg.qr(np.vstack([np.ones(n), np.eye(n)[:-1]]).T)
    free = q[:, 1:]
    basis[0::2, : n - 1] = free
    basis[1::2, n - 1 :] = free
    return basis


def centralize(cfg: VortexConfiguration) -> VortexConfiguration:
    """Translate all centers so the configuration is centralized."""
    shift = centralized_sums(cfg.centers, cfg.geometry) / cfg.N
    c = canonical(cfg.centers, cfg.geometry) - shift
    return cfg.with_centers(c)


def find_equilibrium(
    initial: VortexConfiguration,
    tol: float = 1e-12,
    max_iter: int = 50,
    max_halvings: int = 30,
    fd_step: float = 1e-7,
) -> VortexConfiguration:
    """Damped Gauss-Newton on the 2N residual components inside the centralized subspace.

    The two translation null directions are removed by moving only along
    displacements that keep both coordinate sums fixed.
    """
    cfg = centralize(initial)
    n = cfg.N
    if n == 1:
        return cfg
    basis = constraint_basis(n)
    x = cfg.centers.ravel().copy()

    def resid(flat):
        return _residual_vector(cfg.with_centers(flat.reshape(-1, 2)))

    r = resid(x)
    for _ in range(max_iter):
        if np.max(np.abs(r)) <= tol:
            return cfg.with_centers(x.reshape(-1, 2))
        jac = np.empty((r.size, basis.shape[1]))
        for j in range(basis.shape[1]):
            step = fd_step * basis[:, j]
            jac[:, j] = (resid(x + step) - resid(x - step)) / (2 * fd_step)
        sv = np.linalg.svd(jac, compute_uv=False)
        if sv[-1] <= 1e-12 * sv[0]:
            raise NoConvergence("equilibrium Jacobian is rank deficient beyond translations")
        dy = np.linalg.lstsq(jac, -r, rcond=None)[0]
        lam = 1.0
        base = np.linalg.norm(r)
        for _ in range(max_halvings + 1):
            trial = x + lam * (basis @ dy)
            rt = resid(trial)
            if np.linalg.norm(rt) < base:
                break
            lam *= 0.5
        else:
            raise NoConvergence("line search failed to reduce the residual")
        x, r = trial, rt
    if np.max(np.abs(r)) <= tol:
        return cfg.with_centers(x.reshape(-1, 2))
    raise NoConvergence(f"no equilibrium after {max_iter} iterations, max|f| = {np.max(np.abs(r)):.3e}")


def equilibrium_report(cfg: VortexConfiguration, tol: float = 1e-10) -> EquilibriumReport:
    f = equilibrium_residual(cfg)
    return EquilibriumReport(
        residuals=f,
        max_abs=float(np.max(np.abs(f))),
        centralized=is_centralized(cfg, tol),
        hessian_rank=hessian_rank(cfg),
    )
