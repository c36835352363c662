"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line (run with ``pytest -s`` to see them)
and then asserts, so the pytest summary and the printed lines agree.
"""

import cmath
import math
import time

import numpy as np
import pytest

from oracles import direct_G, direct_K, direct_P, log_sine_mean
from torus_patches.contour import MultiPatchProblem, SingleLayerProblem, assemble_multi, gateaux
from torus_patches.green import TorusGeometry, green_eval, min_image
from torus_patches.point_vortex import (
    centralized_ring,
    energy_gradient,
    equilibrium_residual,
    hessian_rank,
    ring_configuration,
)
from torus_patches.solver import (
    SolveSettings,
    centralization_error,
    continue_in_eps,
    decay_diagnostic,
    solve_multi,
    solve_single,
)
from torus_patches.spectral import FourierCurve, analyze, grid, log_sine_convolution
from torus_patches.torus_special import eval_K, eval_P

RHO = 0.3
GEOM = TorusGeometry(RHO)
RING = centralized_ring(3, GEOM)
D, H = RING.centers[0]


def report(number: int, ok: bool, detail: str) -> None:
    print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
    assert ok, detail


def row(eps: float, M: int = 256) -> SingleLayerProblem:
    return SingleLayerProblem(3, D, H, 3 * math.pi, eps, GEOM, M)


@pytest.fixture(scope="module")
def solves():
    """Single-row solves shared by several criteria, keyed by eps."""
    cache = {}

    def get(eps):
        if eps not in cache:
            t0 = time.perf_counter()
            sol = solve_single(row(eps), SolveSettings())
            cache[eps] = (sol, time.perf_counter() - t0)
        return cache[eps]

    return get


@pytest.fixture(scope="module")
def continuation():
    return continue_in_eps(row(0.0), SolveSettings())


def test_criterion_01_special_identities():
    t0 = time.perf_counter()
    theta = 2 * np.pi * (np.arange(40) + 0.21) / 40
    worst = 0.0
    for rho in (0.1, 0.3, 0.6):
        for r in (rho, math.sqrt(rho)):
            worst = max(worst, abs(eval_K(-1.0, r) - 0.5))
        z = np.exp(1j * theta) * np.sqrt(rho)
        worst = max(worst, np.max(np.abs(eval_K(rho * z, rho) - eval_K(z, rho) + 1)))
        worst = max(worst, np.max(np.abs(eval_K(1 / z, rho) + eval_K(rho * z, rho))))
        worst = max(worst, np.max(np.abs(eval_P(1 / z, rho) + eval_P(z, rho) / z)))
    elapsed = time.perf_counter() - t0
    report(1, worst <= 1e-12 and elapsed < 1.0, f"max identity error {worst:.2e}, {elapsed:.3f} s")


def test_criterion_02_green_function():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    x = np.column_stack([rng.uniform(0, GEOM.width, 100), rng.uniform(0, GEOM.height, 100)])
    y = np.column_stack([rng.uniform(0, GEOM.width, 100), rng.uniform(0, GEOM.height, 100)])
    g = green_eval(x, y, GEOM)
    sym = np.max(np.abs(g - green_eval(y, x, GEOM)))
    per = max(
        np.max(np.abs(g - green_eval(x + [GEOM.width, 0], y, GEOM))),
        np.max(np.abs(g - green_eval(x + [0, GEOM.height], y, GEOM))),
        np.max(np.abs(g - green_eval(x, y - [2 * GEOM.width, GEOM.height], GEOM))),
    )
    target = 1 / (2 * math.pi * math.log(RHO))
    h = 1e-3
    lap_err = 0.0
    for xi, yi in zip(x[:20], y[:20]):
        if np.hypot(*min_image(xi - yi, GEOM)) < 0.3:
            continue
        lap = (
            sum(green_eval(xi + dx, yi, GEOM) for dx in ([h, 0], [-h, 0], [0, h], [0, -h]))
            - 4 * green_eval(xi, yi, GEOM)
        ) / h**2
        lap_err = max(lap_err, abs(-lap - target) / abs(target))
    elapsed = time.perf_counter() - t0
    ok = sym <= 1e-10 and per <= 1e-10 and lap_err <= 1e-4 and elapsed < 10
    report(2, ok, f"symmetry {sym:.1e}, periodicity {per:.1e}, Laplacian rel {lap_err:.1e}, {elapsed:.2f} s")


def test_criterion_03_ring_equilibria():
    worst_f, worst_rel = 0.0, 0.0
    for rho in (0.2, 0.3, 0.5):
        geom = TorusGeometry(rho)
        for N in (2, 3, 4, 6):
            cfg = ring_configuration(N, 0.3, 0.4 * geom.height, geom)
            worst_f = max(worst_f, np.max(np.abs(equilibrium_residual(cfg))))
            moved = cfg.with_centers(cfg.centers + 0.05 * np.random.default_rng(N).standard_normal((N, 2)))
            f = equilibrium_residual(moved)
            grad = energy_gradient(moved)
            expected = grad[:, 1] + 1j * grad[:, 0]
            rel = np.max(np.abs(moved.circulations * f - expected)) / np.max(np.abs(expected))
            worst_rel = max(worst_rel, rel)
    report(3, worst_f <= 1e-10 and worst_rel <= 1e-6, f"max ring |f_m| {worst_f:.1e}, gradient rel {worst_rel:.1e}")


def test_criterion_04_linearization_spectrum():
    M = 256
    p = row(0.0, M)
    worst = 0.0
    for j in range(1, M // 4 + 1):
        out = gateaux(p, FourierCurve.zeros(M=M), FourierCurve.mode(j, "cos", J=M // 4, M=M), modes=M // 4)
        expected = np.zeros(M // 4)
        expected[j - 1] = (j - 1) / 2
        scale = max(abs(expected[j - 1]), 1.0)
        err = max(np.max(np.abs(out.sin_coeffs - expected)), np.max(np.abs(out.cos_coeffs)))
        worst = max(worst, err / scale)
    # two families: each patch of a ring, perturbed alone in cos or sin, responds only on itself
    mp = MultiPatchProblem(RING.centers, np.full(3, math.pi), 0.0, GEOM, M)
    zero = FourierCurve.zeros(J=M // 4, M=M)
    base = [r.total for r in assemble_multi(mp, [zero] * 3)]
    worst2 = 0.0
    for j in (1, 2, 3, 8, 33, 64):
        for kind in ("cos", "sin"):
            v = FourierCurve.mode(j, kind, J=M // 4, M=M)
            out = assemble_multi(mp, [zero, v, zero])
            w = (j - 1) / 2
            for n, r in enumerate(out):
                ds = r.total.sin_coeffs - base[n].sin_coeffs
                dc = r.total.cos_coeffs - base[n].cos_coeffs
                es, ec = np.zeros(M // 4), np.zeros(M // 4)
                if n == 1:
                    if kind == "cos":
                        es[j - 1] = w
                    else:
                        ec[j - 1] = -w
                err = max(np.max(np.abs(ds - es)), np.max(np.abs(dc - ec))) / max(w, 1.0)
                worst2 = max(worst2, err)
    report(4, worst <= 1e-8 and worst2 <= 1e-8, f"cos family rel {worst:.1e}, two-family rel {worst2:.1e}")


def test_criterion_05_quadrature_exactness():
    M = 256
    s = grid(M)
    worst, worst_oracle = 0.0, 0.0
    for m in range(0, 65):
        half = 0.5 * log_sine_convolution(np.cos(m * s))
        expected = 0.0 if m == 0 else 1 / (2 * m)
        worst = max(worst, np.max(np.abs(half - expected * np.cos(m * s))))
        if m in (0, 1, 5, 64):
            worst_oracle = max(worst_oracle, abs(log_sine_mean(m) - 2 * expected))
    report(5, worst <= 1e-12 and worst_oracle <= 1e-12, f"split error {worst:.1e}, quadrature oracle {worst_oracle:.1e}")


def test_criterion_06_single_layer_solve(solves):
    sol, elapsed = solves(0.05)
    ok = sol.residual_norm <= 1e-10 and sol.iterations <= 6 and elapsed < 60
    report(6, ok, f"{sol.iterations} Newton steps, residual {sol.residual_norm:.2e}, {elapsed:.1f} s")


def test_criterion_07_gamma_rate(solves):
    dev = {e: abs(solves(e)[0].gamma - 3 * math.pi) for e in (0.04, 0.02, 0.01)}
    ratios = [dev[0.04] / dev[0.02], dev[0.02] / dev[0.01]]
    ok = all(1.5 <= r <= 2.5 for r in ratios)
    detail = "|gamma - 3 pi| = " + ", ".join(f"{dev[e]:.3e}" for e in dev)
    detail += f"; ratios {ratios[0]:.2f}, {ratios[1]:.2f} (window [1.5, 2.5])"
    report(7, ok, detail)


def test_criterion_08_reflection(solves):
    plus, minus = solves(0.05)[0], solves(-0.05)[0]
    # cosine coefficients of R = 1 + eps u
    diff = np.max(np.abs(0.05 * plus.curve.cos_coeffs - (-0.05) * minus.curve.cos_coeffs))
    gap = abs(plus.gamma - minus.gamma)
    report(8, diff <= 1e-8 and gap <= 1e-8, f"R coefficient mismatch {diff:.1e}, gamma mismatch {gap:.1e}")


def test_criterion_09_multi_patch():
    rank = hessian_rank(RING)
    kap = np.full(3, math.pi)
    drift, cerr, res = [], 0.0, 0.0
    for eps in (0.04, 0.02, 0.01):
        sol = solve_multi(MultiPatchProblem(RING.centers, kap, eps, GEOM, 128))
        drift.append(np.max(np.abs(min_image(sol.centers - RING.centers, GEOM))) / eps)
        cerr = max(cerr, centralization_error(sol.centers, GEOM))
        res = max(res, sol.residual_norm)
    ok = rank == 4 and cerr <= 1e-12 and max(drift) <= 1.0 and res <= 1e-10
    detail = f"rank {rank}, centralization {cerr:.1e}, |X-X0|/eps " + ", ".join(f"{d:.1e}" for d in drift)
    report(9, ok, detail)


def test_criterion_10_regularity(continuation):
    run = continuation
    # an independent run with twice the retained modes over the same eps grid
    fine = continue_in_eps(row(0.0), SolveSettings(J=64))
    states = [s for s in run.states if s.eps > 0]
    min_curv = min(s.min_curvature for s in states)
    slopes = [s.decay_rate for s in states]
    changes = [
        abs(f.decay_rate - c.decay_rate) / abs(c.decay_rate)
        for c, f in zip(states, [s for s in fine.states if s.eps > 0])
    ]
    ok = run.completed and fine.completed and min_curv > 0 and max(slopes) <= -4 and max(changes) <= 0.1
    detail = f"{len(run.states)} states, min eps*kappa {min_curv:.3f}, slope <= {max(slopes):.2f}"
    detail += f", max J->2J change {100 * max(changes):.2e}%"
    report(10, ok, detail)


def test_criterion_11_oracle_truncation():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(50):
        rho = rng.uniform(0.05, 0.7)
        z = cmath.exp(1j * rng.uniform(0.1, 6.2)) * rng.uniform(math.sqrt(rho), 1.0)
        worst = max(worst, abs(eval_P(z, rho) - direct_P(z, rho)), abs(eval_K(z, rho) - direct_K(z, rho)))
        geom = TorusGeometry(rho)
        x = (rng.uniform(0, geom.width), rng.uniform(0, geom.height))
        y = (rng.uniform(0, geom.width), rng.uniform(0, geom.height))
        worst = max(worst, abs(green_eval(x, y, geom) - direct_G(x, y, rho)))
    report(11, worst <= 1e-12, f"max deviation from 500-term oracles {worst:.1e}")
