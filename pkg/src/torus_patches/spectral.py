"""Real Fourier series on the circle: transforms, Sobolev norms, projections."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

DEFAULT_MODES = 32
DEFAULT_GRID = 256


def grid(M: int) -> np.ndarray:
    return 2 * np.pi * np.arange(M) / M


@dataclass(frozen=True)
class FourierCurve:
    """f(s) = mean + sum_{j=1}^J a_j cos(js) + b_j sin(js), sampled on M nodes."""

    cos_coeffs: np.ndarray
    sin_coeffs: np.ndarray
    mean: float = 0.0
    grid_size: int = DEFAULT_GRID

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.cos_coeffs, dtype=float)).copy()
        b = np.atleast_1d(np.asarray(self.sin_coeffs, dtype=float)).copy()
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("cos and sin coefficient arrays must have equal 1-D shape")
        M = int(self.grid_size)
        if M < 4 or M % 2:
            raise ValueError(f"grid size must be even and >= 4, got {M}")
        if 2 * a.size > M:
            raise ValueError(f"{a.size} modes cannot be resolved on {M} nodes")
        a.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "cos_coeffs", a)
        object.__setattr__(self, "sin_coeffs", b)
        object.__setattr__(self, "mean", float(self.mean))
        object.__setattr__(self, "grid_size", M)

    @property
    def J(self) -> int:
        return self.cos_coeffs.size

    @classmethod
    def zeros(cls, J: int = DEFAULT_MODES, M: int = DEFAULT_GRID) -> "FourierCurve":
        return cls(np.zeros(J), np.zeros(J), 0.0, M)

    @classmethod
    def cosine(cls, coeffs, M: int = DEFAULT_GRID) -> "FourierCurve":
        a = np.asarray(coeffs, dtype=float)
        return cls(a, np.zeros_like(a), 0.0, M)

    @classmethod
    def mode(cls, j: int, kind: str = "cos", J: int = DEFAULT_MODES, M: int = DEFAULT_GRID):
        a, b = np.zeros(J), np.zeros(J)
        (a if kind == "cos" else b)[j - 1] = 1.0
        return cls(a, b, 0.0, M)

    def is_cosine_only(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.sin_coeffs) <= tol))

    def samples(self) -> np.ndarray:
        """Values on the M uniform nodes."""
        M = self.grid_size
        spec = np.zeros(M // 2 + 1, dtype=complex)
        spec[0] = self.mean * M
        spec[1 : self.J + 1] = 0.5 * M * (self.cos_coeffs - 1j * self.sin_coeffs)
        return np.fft.irfft(spec, n=M)

    def __call__(self, s):
        return synthesize(self, s)

    def scaled(self, c: float) -> "FourierCurve":
        return FourierCurve(c * self.cos_coeffs, c * self.sin_coeffs, c * self.mean, self.grid_size)

    def __add__(self, other: "FourierCurve") -> "FourierCurve":
        J = max(self.J, other.J)
        a = _pad(self.cos_coeffs, J) + _pad(other.cos_coeffs, J)
        b = _pad(self.sin_coeffs, J) + _pad(other.sin_coeffs, J)
        return FourierCurve(a, b, self.mean + other.mean, max(self.grid_size, other.grid_size))

    def __sub__(self, other: "FourierCurve") -> "FourierCurve":
        return self + other.scaled(-1.0)

    def truncated(self, J: int) -> "FourierCurve":
        return FourierCurve(_pad(self.cos_coeffs, J), _pad(self.sin_coeffs, J), self.mean, self.grid_size)

    def regridded(self, M: int) -> "FourierCurve":
        return FourierCurve(self.cos_coeffs, self.sin_coeffs, self.mean, M)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "cos": [float(v) for v in self.cos_coeffs],
            "sin": [float(v) for v in self.sin_coeffs],
            "grid_size": self.grid_size,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "FourierCurve":
        return cls(data["cos"], data["sin"], data.get("mean", 0.0), data.get("grid_size", DEFAULT_GRID))


def _pad(v: np.ndarray, J: int) -> np.ndarray:
    out = np.zeros(J)
    n = min(J, v.size)
    out[:n] = v[:n]
    return out


def analyze(samples, modes: int | None = None) -> FourierCurve:
    """Trigonometric interpolant of samples on the uniform grid, truncated to ``modes``.

    By default the top half of the resolvable band is discarded (J = M/4),
    which keeps aliased content out of the returned coefficients.
    """
    f = np.asarray(samples, dtype=float)
    M = f.size
    if f.ndim != 1 or M < 4 or M % 2:
        raise ValueError(f"need an even number (>= 4) of samples, got {f.shape}")
    J = M // 4 if modes is None else int(modes)
    if not 0 <= J <= M // 2 - 1:
        raise ValueError(f"modes must lie in [0, {M // 2 - 1}], got {J}")
    spec = np.fft.rfft(f) / M
    a = 2 * spec[1 : J + 1].real
    b = -2 * spec[1 : J + 1].imag
    return FourierCurve(a, b, spec[0].real, M)


def synthesize(c: FourierCurve, s):
    s = np.asarray(s, dtype=float)
    j = np.arange(1, c.J + 1)
    phase = np.multiply.outer(s, j)
    out = c.mean + np.cos(phase) @ c.cos_coeffs + np.sin(phase) @ c.sin_coeffs
    return float(out) if out.ndim == 0 else out


def sobolev_norm(c: FourierCurve, k: int = 3) -> float:
    """(sum_j (a_j^2 + b_j^2) j^(2k))^(1/2); the mean is not part of the norm."""
    j = np.arange(1, c.J + 1, dtype=float)
    return float(np.sqrt(np.sum((c.cos_coeffs**2 + c.sin_coeffs**2) * j ** (2 * k))))


def derivative(c: FourierCurve) -> FourierCurve:
    j = np.arange(1, c.J + 1, dtype=float)
    return FourierCurve(j * c.sin_coeffs, -j * c.cos_coeffs, 0.0, c.grid_size)


def project_drop_first(c: FourierCurve) -> FourierCurve:
    a, b = c.cos_coeffs.copy(), c.sin_coeffs.copy()
    if c.J:
        a[0] = b[0] = 0.0
    return FourierCurve(a, b, c.mean, c.grid_size)


def validate_sobolev_index(k: int) -> int:
    if int(k) != k or k < 3:
        raise ValueError(f"Sobolev index must be an integer >= 3, got {k!r}")
    return int(k)


# --- grid-level helpers used by the contour assembly ---------------------------


def spectral_derivative(f: np.ndarray, order: int = 1) -> np.ndarray:
    """Derivative of grid samples through the FFT (Nyquist mode dropped)."""
    M = f.size
    m = np.fft.rfftfreq(M, 1.0 / M)
    spec = np.fft.rfft(f) * (1j * m) ** order
    spec[-1] = 0.0
    return np.fft.irfft(spec, n=M)


def log_sine_convolution(g: np.ndarray) -> np.ndarray:
    """(1/2pi) int log(1 / (4 sin^2((s-t)/2))) g(t) dt on the grid, exactly for the interpolant.

    Uses int cos(mt) log(1/(4 sin^2(t/2))) dt / 2pi = 1/|m| (m != 0) and 0 for m = 0.
    The Nyquist mode is split evenly between +M/2 and -M/2.
    """
    M = g.shape[-1]
    m = np.fft.rfftfreq(M, 1.0 / M)
    weight = np.zeros_like(m)
    weight[1:] = 1.0 / m[1:]
    return np.fft.irfft(np.fft.rfft(g, axis=-1) * weight, n=M, axis=-1)
