"""Boundary residual of steady vortex patches on the torus.

Patch n has boundary P_n + eps R_n(s) (cos s, sin s) with R_n = 1 + eps u_n and
vorticity (kappa_n / pi) / eps^2.  The residual at boundary node s of patch m is

    F_m(s) = (1 / (eps R_m(s))) d/ds psi(P_m + eps R_m(s) e(s)),

the tangential derivative of the stream function, which equals the normal
velocity through the unnormalised outward normal.  The Green kernel is split as
(1/2pi) log(1/r) + H + (area term); the area term of every patch is carried by
the background contribution.  Terms:

    F1  self-induced logarithmic part (singular kernel, split quadrature)
    F2  logarithmic part of the other patches
    F3  regular part H of every patch, itself included
    F4  background:  (1/|D|) sum_n beta_n [eps R' + dx1 (R' cos/R - sin) + dx2 (R' sin/R + cos)]

with dx = P_m - P_n.  In the single-row problem beta_n = gamma / N, so gamma is
the total background circulation; in the multi-patch problem beta_n = kappa_n.

At eps = 0 every term is replaced by its closed-form limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .green import TorusGeometry, min_image, regular_disp_diff, regular_grad_disp
from .spectral import FourierCurve, analyze, grid, log_sine_convolution

TWO_PI = 2.0 * math.pi
PART_NAMES = ("F1", "F2", "F3", "F4")
DEFAULT_GRID = 256
DEFAULT_MODES = 64


class GeometryError(ValueError):
    """Patch boundary degenerates (R <= 0) or patches overlap."""


@dataclass(frozen=True)
class SingleLayerProblem:
    """N equal patches at (d + 2 pi n / N, h) with background circulation gamma."""

    N: int
    d: float
    h: float
    gamma: float
    eps: float
    geometry: TorusGeometry
    M: int = DEFAULT_GRID

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if not (0.0 < self.d < TWO_PI / self.N):
            raise ValueError(f"d must lie in (0, 2pi/N), got {self.d!r}")
        if not (0.0 < self.h < self.geometry.height):
            raise ValueError(f"h must lie in (0, -log rho), got {self.h!r}")
        if self.M < 8 or self.M % 2:
            raise ValueError("M must be even and >= 8")

    @property
    def centers(self) -> np.ndarray:
        n = np.arange(self.N)
        return np.stack([self.d + TWO_PI * n / self.N, np.full(self.N, self.h)], axis=-1)

    def with_gamma(self, gamma: float) -> "SingleLayerProblem":
        return SingleLayerProblem(self.N, self.d, self.h, gamma, self.eps, self.geometry, self.M)

    def with_eps(self, eps: float) -> "SingleLayerProblem":
        return SingleLayerProblem(self.N, self.d, self.h, self.gamma, eps, self.geometry, self.M)


@dataclass(frozen=True)
class MultiPatchProblem:
    centers: np.ndarray
    circulations: np.ndarray
    eps: float
    geometry: TorusGeometry
    M: int = DEFAULT_GRID

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=float))
        k = np.atleast_1d(np.asarray(self.circulations, dtype=float))
        if c.shape[-1] != 2 or c.shape[0] != k.size:
            raise ValueError("centers (N x 2) and circulations (N) must match")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "circulations", k)
        if self.M < 8 or self.M % 2:
            raise ValueError("M must be even and >= 8")
        n = c.shape[0]
        if n > 1:
            d = min_image(c[:, None, :] - c[None, :, :], self.geometry)
            r = np.hypot(d[..., 0], d[..., 1])[~np.eye(n, dtype=bool)]
            if np.min(r) <= 4 * abs(self.eps):
                raise GeometryError("patch centers closer than 4 eps")

    @property
    def N(self) -> int:
        return self.centers.shape[0]

    def with_centers(self, centers) -> "MultiPatchProblem":
        return MultiPatchProblem(centers, self.circulations, self.eps, self.geometry, self.M)

    def with_eps(self, eps: float) -> "MultiPatchProblem":
        return MultiPatchProblem(self.centers, self.circulations, eps, self.geometry, self.M)


@dataclass
class ContourResidual:
    total: FourierCurve
    parts: dict[str, FourierCurve]
    samples: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def sin1(self) -> float:
        return float(self.total.sin_coeffs[0])

    def cos1(self) -> float:
        return float(self.total.cos_coeffs[0])


# --- shapes --------------------------------------------------------------------


@dataclass(frozen=True)
class _Shape:
    R: np.ndarray
    dR: np.ndarray


def _curve_on_grid(u: FourierCurve, M: int) -> FourierCurve:
    if 2 * u.J > M:
        raise ValueError(f"curve with {u.J} modes does not fit on {M} nodes")
    return u.regridded(M)


def _shape(u: FourierCurve, eps: float, M: int) -> _Shape:
    uu = _curve_on_grid(u, M)
    j = np.arange(1, uu.J + 1)
    du = FourierCurve(j * uu.sin_coeffs, -j * uu.cos_coeffs, 0.0, M)
    R = 1.0 + eps * uu.samples()
    if np.min(R) <= 0.0:
        raise GeometryError("boundary radius R(s) <= 0")
    return _Shape(R, eps * du.samples())


# --- kernel building blocks ----------------------------------------------------


def _kb(A, dA, B, dB, s):
    """Bracket (A(s)B(t) + A'(s)B'(t)) sin(s-t) + (A(s)B'(t) - A'(s)B(t)) cos(s-t) on the grid."""
    diff = s[:, None] - s[None, :]
    sn, cs = np.sin(diff), np.cos(diff)
    return (np.outer(A, B) + np.outer(dA, dB)) * sn + (np.outer(A, dB) - np.outer(dA, B)) * cs


def _log_sine_kb(A, dA, B, dB, s):
    """(1/2pi) int log(1/(4 sin^2((s-t)/2))) * bracket(s, t) dt, spectrally exact."""
    c, sn = np.cos(s), np.sin(s)
    conv = log_sine_convolution(np.stack([B * c, B * sn, dB * c, dB * sn]))
    cbc, cbs, cdc, cds = conv
    sin_part_B = sn * cbc - c * cbs  # int L B(t) sin(s-t)
    cos_part_B = c * cbc + sn * cbs  # int L B(t) cos(s-t)
    sin_part_dB = sn * cdc - c * cds
    cos_part_dB = c * cdc + sn * cds
    return A * (sin_part_B + cos_part_dB) + dA * (sin_part_dB - cos_part_B)


def _smooth_log_ratio(R, dR, s):
    """log(4 sin^2((s-t)/2) / D) with D = (R(s)-R(t))^2 + 4 R(s) R(t) sin^2((s-t)/2).

    Evaluated through log1p of D / (4 sin^2) - 1 so that nearly circular
    boundaries keep full relative accuracy.
    """
    M = s.size
    r = R - 1.0
    half = np.sin(0.5 * (s[:, None] - s[None, :]))
    dRst = R[:, None] - R[None, :]
    out = np.empty((M, M))
    off = ~np.eye(M, dtype=bool)
    excess = (dRst[off] / (2 * half[off])) ** 2 + (r[:, None] + r[None, :] + np.outer(r, r))[off]
    out[off] = -np.log1p(excess)
    out[np.diag_indices(M)] = -np.log1p(dR**2 + 2 * r + r**2)
    return out


def _offsets(eps, target: _Shape, source: _Shape, s):
    """eps (R_m(s) e(s) - R_n(t) e(t)), shape (M, M, 2)."""
    c, sn = np.cos(s), np.sin(s)
    w1 = eps * (np.outer(target.R * c, np.ones_like(s)) - np.outer(np.ones_like(s), source.R * c))
    w2 = eps * (np.outer(target.R * sn, np.ones_like(s)) - np.outer(np.ones_like(s), source.R * sn))
    return np.stack([w1, w2], axis=-1)


def _log_kernel_diff(w, delta):
    """log(1/|delta + w|) - log(1/|delta|), computed without cancellation for small w."""
    r2 = delta[0] ** 2 + delta[1] ** 2
    t = (2 * (delta[0] * w[..., 0] + delta[1] * w[..., 1]) + w[..., 0] ** 2 + w[..., 1] ** 2) / r2
    return -0.5 * np.log1p(t)


def _grad_log_kernel(x):
    r2 = x[..., 0] ** 2 + x[..., 1] ** 2
    return -x / r2[..., None]


# --- eps = 0 limits -------------------------------------------------------------


def self_term_limit(u: FourierCurve, M: int) -> np.ndarray:
    """Limit of the self-induced term as eps -> 0, linear in u.

    -1/2 int (u(s)+u(t)) sin(s-t) + 1/2 int L(s-t) (u(t) sin(s-t) + (u'(t)-u'(s)) cos(s-t)),
    with L = log(1/(4 sin^2(./2))) and int the normalised mean over t.
    """
    uu = _curve_on_grid(u, M)
    s = grid(M)
    uv = uu.samples()
    j = np.arange(1, uu.J + 1)
    du = FourierCurve(j * uu.sin_coeffs, -j * uu.cos_coeffs, 0.0, M).samples()
    ones = np.ones(M)
    zeros = np.zeros(M)
    # int L [u(t) sin(s-t) + u'(t) cos(s-t)]: bracket with A = 1, A' = 0, B = u, B' = u'
    part = _log_sine_kb(ones, zeros, uv, du, s)
    # - u'(s) int L cos(s-t) = - u'(s), since the m = 1 weight is 1
    part = part - du
    a1 = uu.cos_coeffs[0] if uu.J else 0.0
    b1 = uu.sin_coeffs[0] if uu.J else 0.0
    mean_part = 0.5 * (a1 * np.sin(s) - b1 * np.cos(s))
    return -0.5 * mean_part + 0.5 * part


def _pair_limit(grad_k: np.ndarray, coeff: float, s: np.ndarray) -> np.ndarray:
    """Limit of coeff/eps * int [k(delta + w) - k(delta)] bracket dt as eps -> 0."""
    return -0.5 * coeff * (grad_k[0] * np.sin(s) - grad_k[1] * np.cos(s))


def _background_samples(eps, shape: _Shape | None, s, deltas, weights, area):
    c, sn = np.cos(s), np.sin(s)
    if shape is None:
        R, dR = np.ones_like(s), np.zeros_like(s)
    else:
        R, dR = shape.R, shape.dR
    acc = np.zeros_like(s)
    for dx, beta in zip(deltas, weights):
        acc += beta * (eps * dR + dx[0] * (dR * c / R - sn) + dx[1] * (dR * sn / R + c))
    # dR = d/ds (1 + eps u) already carries one factor eps
    return acc / area


# --- target assembly -------------------------------------------------------------


def _target_parts(m, curves, deltas, kappas, bg_weights, eps, geom, M):
    """Samples of F1..F4 on patch m.

    curves[n]: FourierCurve u_n; deltas[n]: P_m - P_n (chosen representative);
    kappas[n]: circulations; bg_weights[n]: background weights beta_n.
    """
    s = grid(M)
    n_patch = len(curves)
    parts = {k: np.zeros(M) for k in PART_NAMES}
    if eps == 0.0:
        parts["F1"] = kappas[m] / math.pi * self_term_limit(curves[m], M)
        for n in range(n_patch):
            dn = np.asarray(deltas[n], float)
            cn = kappas[n] / math.pi
            if n != m:
                parts["F2"] += _pair_limit(_grad_log_kernel(dn), cn, s)
            parts["F3"] += _pair_limit(regular_grad_disp(dn, geom), TWO_PI * cn, s)
        parts["F4"] = _background_samples(0.0, None, s, deltas, bg_weights, geom.area)
        return parts

    shapes = [_shape(u, eps, M) for u in curves]
    tgt = shapes[m]
    inv = 1.0 / (eps * tgt.R)
    # self logarithmic part
    kb_self = _kb(tgt.R, tgt.dR, tgt.R, tgt.dR, s)
    # the circle's own bracket sin(s-t) integrates to zero against L; bilinearity
    # leaves L[R, (R-1)] plus L[(R-1), 1] = -R', which avoids an O(1/eps) roundoff
    sing = _log_sine_kb(tgt.R, tgt.dR, tgt.R - 1.0, tgt.dR, s) - tgt.dR
    smooth = np.mean(_smooth_log_ratio(tgt.R, tgt.dR, s) * kb_self, axis=1)
    parts["F1"] = kappas[m] / math.pi * 0.5 * inv * (sing + smooth)
    for n in range(n_patch):
        src = shapes[n]
        dn = np.asarray(deltas[n], float)
        cn = kappas[n] / math.pi
        kb = kb_self if src is tgt else _kb(tgt.R, tgt.dR, src.R, src.dR, s)
        w = _offsets(eps, tgt, src, s)
        if n != m:
            parts["F2"] += cn * inv * np.mean(_log_kernel_diff(w, dn) * kb, axis=1)
        hdiff = regular_disp_diff(dn, w, geom)
        parts["F3"] += TWO_PI * cn * inv * np.mean(hdiff * kb, axis=1)
    parts["F4"] = _background_samples(eps, tgt, s, deltas, bg_weights, geom.area)
    return parts


def _package(parts: dict[str, np.ndarray], modes: int) -> ContourResidual:
    total = sum(parts[k] for k in PART_NAMES)
    curves = {k: analyze(parts[k], modes) for k in PART_NAMES}
    samples = dict(parts)
    samples["total"] = total
    return ContourResidual(analyze(total, modes), curves, samples)


def _single_inputs(p: SingleLayerProblem, u: FourierCurve):
    n = np.arange(p.N)
    deltas = [np.array([-TWO_PI * k / p.N, 0.0]) for k in n]
    curves = [u] * p.N
    kappas = [math.pi] * p.N
    bg = [p.gamma / p.N] * p.N
    return curves, deltas, kappas, bg


def assemble_single(p: SingleLayerProblem, u: FourierCurve, modes: int | None = None) -> ContourResidual:
    """Residual on the reference patch of the row (the others are translates)."""
    curves, deltas, kappas, bg = _single_inputs(p, u)
    parts = _target_parts(0, curves, deltas, kappas, bg, float(p.eps), p.geometry, p.M)
    return _package(parts, p.M // 4 if modes is None else modes)


def multi_deltas(p: MultiPatchProblem, m: int) -> list[np.ndarray]:
    return [np.zeros(2) if n == m else min_image(p.centers[m] - p.centers[n], p.geometry) for n in range(p.N)]


def assemble_multi(
    p: MultiPatchProblem, us: list[FourierCurve], modes: int | None = None
) -> list[ContourResidual]:
    if len(us) != p.N:
        raise ValueError("need one curve per patch")
    out = []
    kap = list(p.circulations)
    for m in range(p.N):
        parts = _target_parts(m, us, multi_deltas(p, m), kap, kap, float(p.eps), p.geometry, p.M)
        out.append(_package(parts, p.M // 4 if modes is None else modes))
    return out


# --- linearisation ---------------------------------------------------------------


def linearized_at_disk(v: FourierCurve) -> FourierCurve:
    """cos(js) -> (j-1)/2 sin(js), sin(js) -> -(j-1)/2 cos(js)."""
    j = np.arange(1, v.J + 1, dtype=float)
    w = (j - 1) / 2
    return FourierCurve(-w * v.sin_coeffs, w * v.cos_coeffs, 0.0, v.grid_size)


def gateaux(
    p: SingleLayerProblem, u: FourierCurve, v: FourierCurve, eps_fd: float = 0.0, modes: int | None = None
) -> FourierCurve:
    """Directional derivative of the single-row residual in u along v.

    eps_fd = 0 gives the analytic derivative; eps_fd > 0 central differences.
    """
    modes = p.M // 4 if modes is None else modes
    if eps_fd > 0:
        plus = assemble_single(p, u + v.scaled(eps_fd), modes).samples["total"]
        minus = assemble_single(p, u - v.scaled(eps_fd), modes).samples["total"]
        return analyze((plus - minus) / (2 * eps_fd), modes)
    return analyze(_gateaux_samples(p, u, v), modes)


def _gateaux_samples(p: SingleLayerProblem, u: FourierCurve, v: FourierCurve) -> np.ndarray:
    M, eps, geom = p.M, float(p.eps), p.geometry
    s = grid(M)
    if eps == 0.0:
        return self_term_limit(v, M)
    curves, deltas, kappas, bg = _single_inputs(p, u)
    sh = _shape(u, eps, M)
    # perturbation of R and R' (both carry the eps factor)
    dsh = _shape(v, eps, M)
    dR, ddR = dsh.R - 1.0, dsh.dR
    R, Rp = sh.R, sh.dR
    inv = 1.0 / (eps * R)
    base = _target_parts(0, curves, deltas, kappas, bg, eps, geom, M)
    # d(1/(eps R)) = -dR / R * (1/(eps R)); F1..F3 all carry this prefactor
    out = -(dR / R) * (base["F1"] + base["F2"] + base["F3"])

    kb = _kb(R, Rp, R, Rp, s)
    dkb = _kb(dR, ddR, R, Rp, s) + _kb(R, Rp, dR, ddR, s)
    # self log part
    half = np.sin(0.5 * (s[:, None] - s[None, :]))
    dRst = R[:, None] - R[None, :]
    dDst = dR[:, None] - dR[None, :]
    Dm = dRst**2 + 4 * np.outer(R, R) * half**2
    dD = 2 * dRst * dDst + 4 * (np.outer(dR, R) + np.outer(R, dR)) * half**2
    ratio = np.empty_like(Dm)
    off = ~np.eye(M, dtype=bool)
    ratio[off] = dD[off] / Dm[off]
    ratio[np.diag_indices(M)] = (2 * Rp * ddR + 2 * R * dR) / (Rp**2 + R**2)
    sing = _log_sine_kb(dR, ddR, R, Rp, s) + _log_sine_kb(R, Rp, dR, ddR, s)
    smooth = np.mean(_smooth_log_ratio(R, Rp, s) * dkb - ratio * kb, axis=1)
    out += 0.5 * inv * (sing + smooth)

    c, sn = np.cos(s), np.sin(s)
    dw1 = eps * (np.outer(dR * c, np.ones(M)) - np.outer(np.ones(M), dR * c))
    dw2 = eps * (np.outer(dR * sn, np.ones(M)) - np.outer(np.ones(M), dR * sn))
    for n in range(p.N):
        dn = deltas[n]
        w = _offsets(eps, sh, sh, s)
        x = dn + w
        hdiff = regular_disp_diff(dn, w, geom)
        gh = regular_grad_disp(x, geom)
        dh = gh[..., 0] * dw1 + gh[..., 1] * dw2
        out += TWO_PI * inv * np.mean(dh * kb + hdiff * dkb, axis=1)
        if n != 0:
            lk = _log_kernel_diff(w, dn)
            gl = _grad_log_kernel(x)
            dl = gl[..., 0] * dw1 + gl[..., 1] * dw2
            out += inv * np.mean(dl * kb + lk * dkb, axis=1)
    # background
    acc = np.zeros(M)
    for dx, beta in zip(deltas, bg):
        acc += beta * (
            eps * ddR
            + dx[0] * (ddR * c / R - Rp * c * dR / R**2)
            + dx[1] * (ddR * sn / R - Rp * sn * dR / R**2)
        )
    return out + acc / geom.area
