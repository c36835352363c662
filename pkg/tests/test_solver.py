import json
import math

import numpy as np
import pytest

from oracles import curvature_fd
from torus_patches.contour import GeometryError, MultiPatchProblem, SingleLayerProblem, assemble_single
from torus_patches.green import TorusGeometry
from torus_patches.point_vortex import NoConvergence, centralized_ring
from torus_patches.solver import (
    ContinuationRun,
    SolveSettings,
    centralization_error,
    continue_in_eps,
    curvature,
    decay_diagnostic,
    default_eps_grid,
    min_scaled_curvature,
    solve_gamma,
    solve_multi,
    solve_single,
)
from torus_patches.spectral import FourierCurve

GEOM = TorusGeometry(0.3)
RING = centralized_ring(3, GEOM)
D, H = RING.centers[0]
SMALL = SolveSettings(M=64, J=8, eps_grid=(0.0, 0.01, 0.02))


def row(eps, gamma=3 * math.pi, N=3, M=64):
    return SingleLayerProblem(N, D, H, gamma, eps, GEOM, M)


def test_gamma_at_zero_eps_is_point_vortex_value():
    assert solve_gamma(row(0.0, gamma=1.0), FourierCurve.zeros()) == pytest.approx(3 * math.pi, rel=1e-12)


def test_gamma_cancels_first_sine_mode():
    u = FourierCurve.cosine([0.0, 0.1, 0.02], 64)
    p = row(0.03)
    g = solve_gamma(p, u)
    assert abs(assemble_single(p.with_gamma(g), u).sin1()) < 1e-12


def test_residual_affine_in_gamma():
    u = FourierCurve.cosine([0.0, 0.1], 64)
    a = assemble_single(row(0.03, 1.0), u).sin1()
    b = assemble_single(row(0.03, 2.0), u).sin1()
    c = assemble_single(row(0.03, 5.0), u).sin1()
    assert abs(c - (a + 4 * (b - a))) < 1e-12


def test_gamma_degenerate_for_single_patch():
    with pytest.raises(GeometryError):
        solve_gamma(SingleLayerProblem(1, 1.0, H, 1.0, 0.02, GEOM, 64), FourierCurve.zeros())


def test_solve_at_zero_eps_is_disk():
    sol = solve_single(row(0.0), SMALL)
    assert sol.iterations == 0
    assert np.all(sol.curve.cos_coeffs == 0)
    gamma, curve = sol
    assert gamma == pytest.approx(3 * math.pi)


def test_solve_small_eps_converges_and_cancels_first_mode():
    sol = solve_single(row(0.02), SMALL)
    assert sol.residual_norm <= SMALL.tol_residual
    assert sol.curve.cos_coeffs[0] == 0
    res = assemble_single(row(0.02, sol.gamma), sol.curve, 8)
    assert np.max(np.abs(res.total.sin_coeffs)) < 1e-10
    assert sol.history[0] > sol.history[-1]


def test_solve_without_gamma_elimination_for_single_patch():
    p = SingleLayerProblem(1, 1.0, H, math.pi, 0.02, GEOM, 64)
    sol = solve_single(p, SMALL, eliminate_gamma=False)
    assert sol.gamma == math.pi and sol.residual_norm <= SMALL.tol_residual


def test_newton_budget_exhaustion_raises():
    tight = SolveSettings(M=64, J=8, max_newton=1, tol_residual=1e-16)
    with pytest.raises(NoConvergence):
        solve_single(row(0.05), tight)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(tol_residual=0.0),
        dict(max_newton=0),
        dict(M=16, J=8),
        dict(J=1, M=64),
        dict(k=2),
        dict(eps_grid=(0.01, 0.02)),
        dict(eps_grid=(0.0, 0.02, 0.01)),
    ],
)
def test_settings_validation(kwargs):
    with pytest.raises(ValueError):
        SolveSettings(**kwargs)


def test_settings_defaults_serialise():
    s = SolveSettings()
    d = json.loads(json.dumps(s.to_dict()))
    assert d["J"] == 32 and d["eps_grid"][0] == 0.0
    assert default_eps_grid()[0] == 0.0 and np.all(np.diff(default_eps_grid()) > 0)


# --- diagnostics -----------------------------------------------------------------


def test_curvature_of_circle():
    s = np.linspace(0, 6, 7)
    assert np.allclose(curvature(FourierCurve.zeros(), 0.1, s), 10.0)
    assert min_scaled_curvature(FourierCurve.zeros(), 0.1) == pytest.approx(1.0)
    assert np.all(np.isinf(curvature(FourierCurve.zeros(), 0.0, s)))


def test_curvature_against_finite_differences():
    eps = 0.1
    u = FourierCurve.cosine([0.0, 0.8, -0.3, 0.2])
    n = 32768
    s = 2 * np.pi * np.arange(n) / n
    R = 1 + eps * u(s)
    fd = curvature_fd(eps * R * np.cos(s), eps * R * np.sin(s), 2 * np.pi / n)
    assert np.max(np.abs(curvature(u, eps, s) - fd) / np.abs(fd)) < 1e-6


def test_curvature_rejects_negative_radius():
    with pytest.raises(GeometryError):
        curvature(FourierCurve.cosine([0.0, 30.0]), 0.1, np.linspace(0, 6, 50))


def test_decay_diagnostic():
    assert math.isnan(decay_diagnostic(FourierCurve.mode(2, "cos")))
    j = np.arange(1, 17, dtype=float)
    a = np.where(j >= 2, j**-5.0, 0.0)
    assert decay_diagnostic(FourierCurve(a, np.zeros(16))) == pytest.approx(-5.0)


# --- continuation ------------------------------------------------------------------


def test_short_continuation():
    run = continue_in_eps(row(0.0), SMALL)
    assert run.completed and [s.eps for s in run.states] == list(SMALL.eps_grid)
    for st in run.states:
        assert st.residual_norm <= SMALL.tol_residual
        assert st.min_curvature > 0
    d = json.loads(json.dumps(run.to_dict()))
    assert d["failure"] is None and len(d["states"]) == 3


def test_continuation_failure_is_recorded():
    tight = SolveSettings(M=64, J=8, max_newton=1, eps_grid=(0.0, 0.08))
    run = continue_in_eps(row(0.0), tight)
    assert not run.completed
    assert len(run.states) == 1
    assert run.failure["eps"] == 0.08 and run.failure["error"] == "NoConvergence"
    assert isinstance(run, ContinuationRun)


# --- several patches -----------------------------------------------------------------


def test_multi_ring_agrees_with_single_row():
    eps = 0.02
    settings = SolveSettings(M=64, J=8)
    mp = MultiPatchProblem(RING.centers, np.full(3, math.pi), eps, GEOM, 64)
    msol = solve_multi(mp, settings)
    ssol = solve_single(row(eps), settings)
    assert msol.residual_norm <= settings.tol_residual
    assert centralization_error(msol.centers, GEOM) < 1e-12
    for u in msol.curves:
        # the ring patches agree with the row solution up to a rotation-free copy
        assert np.max(np.abs(u.cos_coeffs - ssol.curve.cos_coeffs)) < 1e-9
        assert np.max(np.abs(u.sin_coeffs)) < 1e-9


def test_multi_single_patch():
    mp = MultiPatchProblem([[1.0, H]], [math.pi], 0.02, GEOM, 64)
    sol = solve_multi(mp, SolveSettings(M=64, J=8))
    assert sol.residual_norm <= 1e-10
    assert np.array_equal(sol.centers, mp.centers)
