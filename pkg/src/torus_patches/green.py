"""Green function of the flat torus (0, 2pi) x (0, -log rho) via the annulus map zeta = exp(i z).

With w = exp(i (x1 - y1) - (x2 - y2)) the Green function is

    G = -(1/2pi) log|P(w)| - (x2 - y2)/(4pi) - (x2 - y2)^2 / (4pi log rho)

which solves -Laplace G = delta - 1/|D| with |D| = -2pi log rho.  The regular
part H removes the logarithmic singularity and the quadratic area term,
both measured with the minimal-image displacement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .torus_special import (
    DEFAULT_POLICY,
    SingularityError,
    TruncationPolicy,
    k_series_tail,
    log_abs_P_polar,
    log_abs_P_polar_diff,
)

TWO_PI = 2.0 * math.pi
NEAR_DIAGONAL = 1e-3


@dataclass(frozen=True)
class TorusGeometry:
    rho: float
    policy: TruncationPolicy = DEFAULT_POLICY
    n_terms: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (0.0 < self.rho < 1.0):
            raise ValueError(f"rho must lie in (0, 1), got {self.rho!r}")
        object.__setattr__(self, "n_terms", self.policy.terms(self.rho))

    @property
    def width(self) -> float:
        return TWO_PI

    @property
    def height(self) -> float:
        return -math.log(self.rho)

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def log_rho(self) -> float:
        return math.log(self.rho)


class TorusPoint(NamedTuple):
    x1: float
    x2: float

    def canonical(self, geom: TorusGeometry) -> "TorusPoint":
        return TorusPoint(self.x1 % geom.width, self.x2 % geom.height)


def _points(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.shape[-1] != 2:
        raise ValueError("points must have a trailing axis of length 2")
    return a


def canonical(x, geom: TorusGeometry) -> np.ndarray:
    a = _points(x)
    return np.stack([a[..., 0] % geom.width, a[..., 1] % geom.height], axis=-1)


def min_image(d, geom: TorusGeometry) -> np.ndarray:
    """Representative of a displacement in [-pi, pi) x [-H/2, H/2)."""
    a = _points(d)
    w, h = geom.width, geom.height
    d1 = a[..., 0] - w * np.floor(a[..., 0] / w + 0.5)
    d2 = a[..., 1] - h * np.floor(a[..., 1] / h + 0.5)
    return np.stack([d1, d2], axis=-1)


def to_annulus(p, geom: TorusGeometry):
    """zeta = exp(i x1 - x2) of the canonical representative."""
    c = canonical(p, geom)
    out = np.exp(1j * c[..., 0] - c[..., 1])
    return out if out.ndim else complex(out)


def _scalar(v):
    return float(v) if np.ndim(v) == 0 else v


# --- displacement-level kernels -------------------------------------------------
# All evaluators below take a displacement d = x - y (any representative) and
# reduce only the vertical component before mapping, which keeps |w| inside
# (rho^(1/2), rho^(-1/2)]; G itself is doubly periodic so nothing is lost.


def _reduced_w(d: np.ndarray, geom: TorusGeometry):
    dm = min_image(d, geom)
    return np.exp(1j * dm[..., 0] - dm[..., 1]), dm


def green_disp(d, geom: TorusGeometry) -> np.ndarray:
    d = _points(d)
    dm = min_image(d, geom)
    if np.any(np.hypot(dm[..., 0], dm[..., 1]) == 0.0):
        raise SingularityError("Green function evaluated at coincident points")
    logp = log_abs_P_polar(dm[..., 0], dm[..., 1], geom.rho, geom.n_terms)
    d2 = dm[..., 1]
    return -logp / TWO_PI - d2 / (4 * math.pi) - d2**2 / (4 * math.pi * geom.log_rho)


# log((e^z - 1)/z) = z/2 + sum_k B_2k z^2k / (2k (2k)!), Bernoulli numbers B_2..B_14
_LOG_PHI_COEFFS = tuple(
    b / (2 * k * math.factorial(2 * k))
    for k, b in enumerate((1 / 6, -1 / 30, 1 / 42, -1 / 30, 5 / 66, -691 / 2730, 7 / 6), start=1)
)
LOG_PHI_SERIES_RADIUS = 0.5


def _log_phi(z: np.ndarray) -> np.ndarray:
    """log((e^z - 1)/z) by its Taylor series; good to roundoff for |z| <= 0.5."""
    z2 = z * z
    acc = np.zeros_like(z)
    for c in reversed(_LOG_PHI_COEFFS):
        acc = (acc + c) * z2
    return z / 2 + acc


def _dlog_phi(z: np.ndarray) -> np.ndarray:
    return 0.5 + z / 12 - z**3 / 720


def regular_disp(d, geom: TorusGeometry) -> np.ndarray:
    """H as a function of a displacement, log and quadratic terms taken on ``d`` as given.

    Passing a minimal-image displacement gives the standard regular part; a
    shifted representative gives the regular part relative to that image.
    """
    d = _points(d)
    r = np.hypot(d[..., 0], d[..., 1])
    out = np.empty(r.shape)
    far = r >= NEAR_DIAGONAL
    quad = r**2 / (4 * math.pi * geom.log_rho)
    if np.any(far):
        out[far] = green_disp(d[far], geom) + np.log(r[far]) / TWO_PI + quad[far]
    near = ~far
    if np.any(near):
        dn = d[near]
        delta = dn[:, 0] + 1j * dn[:, 1]
        logq = log_abs_P_polar(dn[:, 0], dn[:, 1], geom.rho, geom.n_terms, with_zero=False)
        # log|1 - w| - log r = Re log((e^{i delta} - 1) / (i delta))
        lphi = _log_phi(1j * delta).real
        d2 = dn[:, 1]
        out[near] = (
            -(logq + lphi) / TWO_PI
            - d2 / (4 * math.pi)
            - d2**2 / (4 * math.pi * geom.log_rho)
            + quad[near]
        )
    return out


def _log_abs_phi(d: np.ndarray) -> np.ndarray:
    """log|1 - w| - log|d| for w = exp(i d1 - d2), accurate relative to its size."""
    u = 1j * (d[..., 0] + 1j * d[..., 1])
    out = np.empty(u.shape)
    small = np.abs(u) <= LOG_PHI_SERIES_RADIUS
    out[small] = _log_phi(u[small]).real
    big = ~small
    if np.any(big):
        db = d[big]
        s4 = 4.0 * np.sin(0.5 * db[:, 0]) ** 2
        num = np.expm1(-db[:, 1]) ** 2 + np.exp(-db[:, 1]) * s4
        out[big] = 0.5 * np.log(num) - np.log(np.hypot(db[:, 0], db[:, 1]))
    return out


def regular_disp_diff(d0, w, geom: TorusGeometry) -> np.ndarray:
    """H(d0 + w) - H(d0) for one displacement d0 and an array of offsets w.

    Formed from differences of the individual terms so that small offsets keep
    full relative accuracy (the contour integrals divide this by eps).  d0 = 0
    gives the self term H(w) - H(0); otherwise d0 + w must avoid the lattice.
    """
    d0 = np.asarray(d0, dtype=float)
    w = _points(w)
    lr = geom.log_rho
    w1, w2 = w[..., 0], w[..., 1]
    r2w = w1**2 + w2**2
    if not np.any(d0):
        dq = log_abs_P_polar_diff(0.0, 0.0, w1, w2, geom.rho, geom.n_terms, with_zero=False)
        dphi = _log_abs_phi(w)
        return -(dq + dphi) / TWO_PI - w2 / (4 * math.pi) - w2**2 / (4 * math.pi * lr) + r2w / (4 * math.pi * lr)
    # same lattice shift for both points keeps the two P arguments adjacent
    dm0 = min_image(d0, geom)
    dlogp = log_abs_P_polar_diff(dm0[0], dm0[1], w1, w2, geom.rho, geom.n_terms)
    dG = -dlogp / TWO_PI - w2 / (4 * math.pi) - w2 * (2 * dm0[1] + w2) / (4 * math.pi * lr)
    step = 2 * (d0[0] * w1 + d0[1] * w2) + r2w
    r2 = d0[0] ** 2 + d0[1] ** 2
    return dG + 0.5 * np.log1p(step / r2) / TWO_PI + step / (4 * math.pi * lr)


def regular_grad_disp(d, geom: TorusGeometry) -> np.ndarray:
    """Gradient of ``regular_disp`` with respect to the displacement."""
    d = _points(d)
    r = np.hypot(d[..., 0], d[..., 1])
    g = np.empty(d.shape)
    far = r >= NEAR_DIAGONAL
    near = ~far
    lr = geom.log_rho
    if np.any(far):
        df = d[far]
        w, dm = _reduced_w(df, geom)
        kk = w / (w - 1.0) + k_series_tail(w, geom.rho, geom.n_terms)
        r2 = r[far] ** 2
        g1 = kk.imag / TWO_PI + df[:, 0] / (TWO_PI * r2) + df[:, 0] / (TWO_PI * lr)
        g2 = (
            kk.real / TWO_PI
            - 1.0 / (4 * math.pi)
            - dm[:, 1] / (TWO_PI * lr)
            + df[:, 1] / (TWO_PI * r2)
            + df[:, 1] / (TWO_PI * lr)
        )
        g[far] = np.stack([g1, g2], axis=-1)
    if np.any(near):
        dn = d[near]
        delta = dn[:, 0] + 1j * dn[:, 1]
        w = np.exp(1j * delta)
        # derivative in delta of log Q(e^{i delta}) + log phi(i delta)
        fp = 1j * k_series_tail(w, geom.rho, geom.n_terms) + 1j * _dlog_phi(1j * delta)
        g1 = -fp.real / TWO_PI + dn[:, 0] / (TWO_PI * lr)
        g2 = fp.imag / TWO_PI - 1.0 / (4 * math.pi) + dn[:, 1] / (TWO_PI * lr) - dn[:, 1] / (TWO_PI * lr)
        g[near] = np.stack([g1, g2], axis=-1)
    return g


# --- point-level API ------------------------------------------------------------


def green_eval(x, y, geom: TorusGeometry):
    """G(x, y); raises SingularityError when x and y coincide on the torus."""
    d = _points(x) - _points(y)
    return _scalar(green_disp(d, geom))


def regular_part_H(x, y, geom: TorusGeometry):
    """H(x, y) = G + (1/2pi) log|x-y| + |x-y|^2 / (4pi log rho), minimal-image distances."""
    d = min_image(_points(x) - _points(y), geom)
    return _scalar(regular_disp(d, geom))


def grad_H(x, y, geom: TorusGeometry, which: str = "first") -> np.ndarray:
    """Gradient of H in its first or second argument."""
    if which not in ("first", "second"):
        raise ValueError("which must be 'first' or 'second'")
    d = min_image(_points(x) - _points(y), geom)
    g = regular_grad_disp(d, geom)
    return g if which == "first" else -g


def robin_constant(rho: float, policy: TruncationPolicy = DEFAULT_POLICY) -> float:
    """Diagonal value of H: -(1/pi) sum log(1 - rho^n)."""
    n = policy.terms(rho)
    q = rho ** np.arange(1, n + 1, dtype=float)
    return float(-np.sum(np.log1p(-q)) / math.pi)
