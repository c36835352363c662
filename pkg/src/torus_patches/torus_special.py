"""Prime-type product P and its logarithmic derivative K on the annulus rho < |zeta| <= 1.

    P(zeta) = (1 - zeta) * prod_{n>=1} (1 - rho^n zeta) (1 - rho^n / zeta)
    K(zeta) = zeta P'(zeta) / P(zeta)

Both are evaluated as truncated products/series whose length is fixed by a
tail bound, so repeated calls with the same policy are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_TERMS = 10_000
TOL_FLOOR = 1e-14
POLE_RADIUS = 1e-8


class TruncationError(ValueError):
    """The series would need more terms than the policy allows."""

    def __init__(self, rho: float, tol: float, required: int, cap: int):
        self.rho = rho
        self.tol = tol
        self.required = required
        self.cap = cap
        super().__init__(
            f"rho={rho!r}, tol={tol!r} needs {required} terms, cap is {cap}"
        )


class SingularityError(ValueError):
    """Evaluation point sits on (or within the exclusion radius of) a pole."""


def _check_rho(rho: float) -> None:
    if not (0.0 < rho < 1.0):
        raise ValueError(f"rho must lie in (0, 1), got {rho!r}")


def truncation_length(rho: float, tol: float, max_terms: int = MAX_TERMS) -> int:
    """Smallest n >= 1 with rho**n / (1 - rho) < tol.

    Raises TruncationError (carrying the required count) when that n exceeds
    ``max_terms``.
    """
    _check_rho(rho)
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol!r}")
    bound = tol * (1.0 - rho)
    # closed-form guess, then walk to the exact smallest integer
    n = max(1, math.ceil(math.log(bound) / math.log(rho)) if bound < 1 else 1)
    while n > 1 and rho ** (n - 1) / (1.0 - rho) < tol:
        n -= 1
    while not rho**n / (1.0 - rho) < tol:
        n += 1
    if n > max_terms:
        raise TruncationError(rho, tol, n, max_terms)
    return n


@dataclass(frozen=True)
class TruncationPolicy:
    """Absolute tail tolerance plus a hard cap on the number of factors."""

    tol: float = TOL_FLOOR
    max_terms: int = MAX_TERMS

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_terms < 1:
            raise ValueError("max_terms must be >= 1")

    @property
    def effective_tol(self) -> float:
        return max(self.tol, TOL_FLOOR)

    def terms(self, rho: float) -> int:
        return truncation_length(rho, self.effective_tol, self.max_terms)


DEFAULT_POLICY = TruncationPolicy()


def _as_complex(zeta) -> np.ndarray:
    z = np.asarray(zeta, dtype=complex)
    if np.any(z == 0):
        raise ValueError("zeta = 0 is outside the domain of P and K")
    return z


def _rho_powers(rho: float, n_terms: int) -> np.ndarray:
    return rho ** np.arange(1, n_terms + 1, dtype=float)


def product_tail(zeta, rho: float, n_terms: int) -> np.ndarray:
    """prod_{n=1}^{n_terms} (1 - rho^n zeta)(1 - rho^n / zeta), i.e. P without its zero."""
    z = _as_complex(zeta)
    inv = 1.0 / z
    out = np.ones_like(z)
    for q in _rho_powers(rho, n_terms):
        out = out * (1.0 - q * z) * (1.0 - q * inv)
    return out


def log_abs_P_polar(theta, depth, rho: float, n_terms: int, with_zero: bool = True) -> np.ndarray:
    """log|P(w)| for w = exp(i theta - depth), in real arithmetic.

    Each factor uses |1 - c w|^2 = (1 - c a)^2 + 4 c a sin^2(theta/2) with
    a = exp(-depth); the zero factor takes 1 - a from expm1, so the result
    keeps full relative accuracy as w approaches 1.
    """
    depth = np.asarray(depth, dtype=float)
    a = np.exp(-depth)
    s4 = 4.0 * np.sin(0.5 * np.asarray(theta, dtype=float)) ** 2
    inv = 1.0 / a
    prod = np.ones(np.broadcast(a, s4).shape)
    for q in _rho_powers(rho, n_terms):
        qa, qb = q * a, q * inv
        prod *= ((1.0 - qa) ** 2 + qa * s4) * ((1.0 - qb) ** 2 + qb * s4)
    out = 0.5 * np.log(prod)
    if with_zero:
        out = out + 0.5 * np.log(np.expm1(-depth) ** 2 + a * s4)
    return out


def _factor_step(c0, dc, s4_0, ds4, one_minus_sum):
    """f(c0 + dc, s4_0 + ds4) - f(c0, s4_0) for f = (1 - c)^2 + c s4.

    one_minus_sum is 2 - c0 - c1, passed in so callers can form it without cancellation.
    """
    return -dc * one_minus_sum + (c0 + dc) * ds4 + dc * s4_0


def log_abs_P_polar_diff(
    theta0, depth0, dtheta, ddepth, rho: float, n_terms: int, with_zero: bool = True
) -> np.ndarray:
    """log|P(w1)| - log|P(w0)| for w0 = exp(i theta0 - depth0), w1 = w0 exp(i dtheta - ddepth).

    Each factor ratio is 1 + t with t built from expm1 and
    sin^2 A - sin^2 B = sin(A + B) sin(A - B), so a small step keeps full
    relative accuracy. The ratios are multiplied as e -> e + t + e t with
    e = product - 1 and a single log1p at the end. With with_zero set, w0 must
    stay away from 1.
    """
    depth0 = np.asarray(depth0, dtype=float)
    theta0 = np.asarray(theta0, dtype=float)
    dtheta = np.asarray(dtheta, dtype=float)
    ddepth = np.asarray(ddepth, dtype=float)
    a0 = np.exp(-depth0)
    b0 = 1.0 / a0
    s4_0 = 4.0 * np.sin(0.5 * theta0) ** 2
    ds4 = 4.0 * np.sin(theta0 + 0.5 * dtheta) * np.sin(0.5 * dtheta)
    excess = np.zeros(np.broadcast(a0, s4_0, ds4, ddepth).shape)
    for c_base, dc_base in ((a0, a0 * np.expm1(-ddepth)), (b0, b0 * np.expm1(ddepth))):
        # with c0 = q c_base, dc = q dc_base the step is q * lin + q^2 * quad
        lin = dc_base * (s4_0 - 2.0 + ds4) + c_base * ds4
        quad = dc_base * (2.0 * c_base + dc_base)
        for q in _rho_powers(rho, n_terms):
            c0 = q * c_base
            f0 = (1.0 - c0) ** 2 + c0 * s4_0
            t = (q / f0) * lin + (q * q / f0) * quad
            excess += t + excess * t
    out = np.log1p(excess)
    if with_zero:
        da = a0 * np.expm1(-ddepth)
        one_minus_a0 = -np.expm1(-depth0)
        one_minus_a1 = -np.expm1(-depth0 - ddepth)
        f0 = one_minus_a0**2 + a0 * s4_0
        out = out + np.log1p(_factor_step(a0, da, s4_0, ds4, one_minus_a0 + one_minus_a1) / f0)
    return 0.5 * out


def eval_P(zeta, rho: float, policy: TruncationPolicy = DEFAULT_POLICY):
    """Truncated product P(zeta); exactly zero at zeta = 1."""
    _check_rho(rho)
    z = _as_complex(zeta)
    out = (1.0 - z) * product_tail(z, rho, policy.terms(rho))
    return out if out.ndim else complex(out)


def _check_poles(z: np.ndarray, rho: float, n_terms: int) -> None:
    near = np.abs(z - 1.0) < POLE_RADIUS
    for q in _rho_powers(rho, n_terms):
        near |= np.abs(z - q) < POLE_RADIUS
        near |= np.abs(z - 1.0 / q) < POLE_RADIUS
    if np.any(near):
        bad = z[near] if z.ndim else z
        raise SingularityError(f"K evaluated within {POLE_RADIUS} of a pole: {bad}")


def k_series_tail(zeta, rho: float, n_terms: int) -> np.ndarray:
    """K minus its zeta/(zeta - 1) part; regular at zeta = 1."""
    z = _as_complex(zeta)
    inv = 1.0 / z
    out = np.zeros_like(z)
    for q in _rho_powers(rho, n_terms):
        out = out - q * z / (1.0 - q * z) + q * inv / (1.0 - q * inv)
    return out


def eval_K(zeta, rho: float, policy: TruncationPolicy = DEFAULT_POLICY):
    """Logarithmic derivative zeta P'/P from its partial-fraction series."""
    _check_rho(rho)
    z = _as_complex(zeta)
    n_terms = policy.terms(rho)
    _check_poles(z, rho, n_terms)
    out = z / (z - 1.0) + k_series_tail(z, rho, n_terms)
    return out if out.ndim else complex(out)
