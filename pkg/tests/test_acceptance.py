"""End-to-end acceptance checks, one test per criterion at its stated tolerance.

Each test records a PASS/FAIL line that is printed in the terminal summary.
"""

import math
import time

import numpy as np
import pytest

from phaseflow import cli
from phaseflow import functional as F
from phaseflow import manifolds as M
from phaseflow import quantize as Q
from phaseflow import symbols as S
from phaseflow import variation as V
from phaseflow import zeroset as Z

pytestmark = pytest.mark.acceptance


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


def test_01_elliptic_determinant(record):
    with Timer() as t:
        res = Q.elliptic_logdet_compare(S.elliptic_gauss(0.5), [0.1, 0.05, 0.025], target=1.408715)
    errors = {row[0]: row[4] for row in res.rows}
    Ns = [row[1] for row in res.rows]
    ok = res.slope >= 0.8 and errors[0.05] <= 0.02 and all(512 <= n <= 2048 for n in Ns) and t.seconds <= 120
    record(1, ok, f"slope {res.slope:.3f}, E(0.05) {errors[0.05]:.2e}, N {Ns}", t.seconds)
    assert ok


def test_02_determinant_upper_bound(record):
    with Timer() as t:
        family = [S.elliptic_gauss(c) for c in (0.5, 0.3, -0.5, 0.5j, -0.3 + 0.4j)]
        slack = Q.calibrate_slack(family, [0.1, 0.05])
        weights = Q.bump_weights(np.linspace(-0.2, 0.2, 9))
        res = Q.bound_experiment(S.shifted_ring(0.3), weights, [0.1, 0.05], slack)
    ok = res.all_satisfied and not res.skipped and len(res.rows) == 18 and t.seconds <= 300
    margin = min(r[3] + r[4] - r[2] for r in res.rows)
    record(2, ok, f"{sum(r[-1] for r in res.rows)}/18 rows hold, smallest margin {margin:.3f}, "
                  f"slack {slack.a:.2e} + {slack.b:.2e} h", t.seconds)
    assert ok


def test_03_regularization_rate(record):
    ring = -math.pi**3 / 4
    plane = M.IRManifold.real_space(1, 4.5, 801)
    with Timer() as t:
        fits = {m0: F.rate_fit(plane, S.ring_zero(m0), F.default_ladder(), limit=m0 * ring) for m0 in (1, 2)}
    ok = all(abs(fits[m0].exponent - 1 / m0) <= 0.15 and fits[m0].monotone for m0 in fits) and t.seconds <= 60
    record(3, ok, ", ".join(f"m0={m0}: exponent {f.exponent:.3f} monotone {f.monotone}" for m0, f in fits.items()),
           t.seconds)
    assert ok


def test_04_gradient_matches_finite_difference(record):
    # pairing on a fine grid; finite differences on a coarser one, Richardson-combined over h and 2h
    phi = M.x_only(1, alpha=1.0, coef=0.15)
    fine = M.IRManifold.weight_graph(phi, 4.0, 1001)
    coarse = M.IRManifold.weight_graph(phi, 4.0, 601)
    rng = np.random.default_rng(4)
    gens = [M.random_generator(1, rng) for _ in range(10)]
    symbols = [S.shifted_ring(0.3), S.ring_zero(1), S.ring_zero(2)]
    eps = [0.05, 0.1]
    with Timer() as t:
        pairs = {(i, e): V.gradient_pairing_eps(fine, p, gens, e) for i, p in enumerate(symbols) for e in eps}
        worst = 0.0
        for k, g in enumerate(gens):
            diff = {}
            for h in (1e-3, 2e-3):
                plus, minus = M.flow(coarse, g, h, h), M.flow(coarse, g.scaled(-1), h, h)
                for i, p in enumerate(symbols):
                    diff[i, h] = (F.ladder_sums(plus, p, eps)[0] - F.ladder_sums(minus, p, eps)[0]) / (2 * h)
            for i in range(len(symbols)):
                fd = (4 * diff[i, 1e-3] - diff[i, 2e-3]) / 3
                for j, e in enumerate(eps):
                    worst = max(worst, abs(pairs[i, e][k] - fd[j]) / abs(fd[j]))
    ok = worst <= 1e-5 and t.seconds <= 180
    record(4, ok, f"worst relative error {worst:.2e} over 10 generators x 3 symbols x 2 eps", t.seconds)
    assert ok


def test_05_hessians(record):
    plane = M.IRManifold.real_space(1, 4.0, 601)
    p = S.shifted_ring(0.3)
    rng = np.random.default_rng(5)
    gens = [M.gaussian_bump(1, [0.5, 0.2], 0.8)] + [M.random_generator(1, rng, scale=0.5) for _ in range(2)]
    worst, nonneg = 0.0, True
    with Timer() as t:
        for g in gens:
            for eps in (0.05, 0.1):
                h = V.hessian_autonomous(plane, p, g, eps)
                nonneg &= h >= 0
                fd = V.second_difference(plane, p, g, eps)
                worst = max(worst, abs(h - fd) / abs(fd))
                fam = M.nonautonomous(g, M.coordinate(1, 0, 0.5))
                hn = V.hessian_nonautonomous(plane, p, fam, eps)
                fdn = V.second_difference(plane, p, fam, eps)
                worst = max(worst, abs(hn - fdn) / abs(fdn))
    ok = worst <= 1e-3 and nonneg and t.seconds <= 180
    record(5, ok, f"worst relative error {worst:.2e}, autonomous Hessians nonnegative {nonneg}", t.seconds)
    assert ok


def test_06_criticality_and_bracket(record):
    real = M.IRManifold.real_space(2, 2.0, 3)
    rng = np.random.default_rng(6)
    gens = [M.random_generator(2, rng) for _ in range(5)]
    with Timer() as t:
        torus = Z.extract_sigma(real, S.torus_codim2())
        (x1, x2), _ = S.coords(2)
        bent = Z.extract_sigma(real, S.perturbed(S.torus_codim2(), x1 * x2, 0.1), torus.u)

        def pairings(surf):
            pts = surf.u.reshape(-1, 4).astype(complex)
            return [abs(Z.sigma_pairing(surf, g.value(pts).real.reshape(surf.shape))) for g in gens]

        critical, broken = pairings(torus), pairings(bent)
    ok = max(critical) <= 1e-6 and max(broken) >= 1e-5 and t.seconds <= 120
    record(6, ok, f"torus max pairing {max(critical):.2e}, perturbed max pairing {max(broken):.2e}", t.seconds)
    assert ok


def test_07_liouville_identity(record):
    real = M.IRManifold.real_space(2, 2.0, 3)
    with Timer() as t:
        graph = Z.liouville_check(Z.extract_sigma(real, S.graph_codim2(), Z.graph_disc_seeds(), kind="disc"))
        torus = Z.liouville_check(Z.extract_sigma(real, S.torus_codim2()))
    ok = graph.pointwise_residual <= 1e-8 and abs(torus.integral) <= 1e-10 and t.seconds <= 30
    record(7, ok, f"graph pointwise {graph.pointwise_residual:.2e}, torus integral {abs(torus.integral):.2e}",
           t.seconds)
    assert ok


def test_08_elliptic_correction(record):
    (x1, x2), _ = S.coords(2)
    with Timer() as t:
        res = Z.correction_experiment(x1 * x2, (0.02, 0.04, 0.08))
    ok = res.solve_residual <= 1e-10 and res.slope_corrected >= 1.9 and t.seconds <= 60
    record(8, ok, f"solve residual {res.solve_residual:.2e}, corrected slope {res.slope_corrected:.3f} "
                  f"(uncorrected {res.slope_uncorrected:.3f})", t.seconds)
    assert ok


def test_09_index_formula(record):
    def f(x, xi):
        return np.exp(-(x - 0.3) ** 2 - 0.5 * xi**2) * (1 + 0.2 * xi)

    cases = {"x": (lambda x: x, lambda x: 1.0, math.pi), "-x": (lambda x: -x, lambda x: -1.0, -math.pi),
             "x^2": (lambda x: x * x, lambda x: 2 * x, 0.0)}
    with Timer() as t:
        errs = {k: abs(V.index_gradient_1d(r, dr, f).value - c * f(0.0, 0.0)) for k, (r, dr, c) in cases.items()}
    ok = max(errs.values()) <= 1e-3 and t.seconds <= 30
    record(9, ok, ", ".join(f"r={k}: error {v:.1e}" for k, v in errs.items()), t.seconds)
    assert ok


def test_10_jump_at_real_symbol(record):
    plane = M.IRManifold.real_space(1, 4.0, 601)
    p = S.ring_zero(1)
    t_values = [-0.08, -0.04, -0.02, 0.02, 0.04, 0.08]
    with Timer() as t:
        breaking = V.jump_experiment(plane, p, M.coordinate(1, 0), t_values)
        others = [V.jump_experiment(plane, p, g, t_values)
                  for g in (M.gaussian_bump(1, [0.4, -0.3], 0.7), M.gaussian_bump(1, [0.0, 0.5], 1.0, [1, 0]))]
    rel = abs(breaking.jump - breaking.predicted_jump) / abs(breaking.predicted_jump)
    jumps = [breaking.jump] + [r.jump for r in others]
    ok = min(jumps) >= -1e-6 and rel <= 0.05 and t.seconds <= 120
    record(10, ok, f"jump {breaking.jump:.4f} vs predicted {breaking.predicted_jump:.4f} ({rel:.1%}), "
                   f"all jumps {[round(j, 4) for j in jumps]}", t.seconds)
    assert ok


def test_11_minimality(record):
    plane = M.IRManifold.real_space(1, 4.0, 601)
    p = S.ring_zero(1)
    families = {
        "x": (M.coordinate(1, 0), True),
        "xi": (M.coordinate(1, 1), True),
        "x*xi": (M.monomial(1, [1, 1]), True),
        "bump": (M.gaussian_bump(1, [0.3, 0.2], 0.7, [0, 1]), False),
        "nonautonomous": (M.nonautonomous(M.gaussian_bump(1, [-0.2, 0.1], 1.0), M.coordinate(1, 0, 0.5)), False),
    }
    worst, convex = 0.0, True
    ok_dev = True
    with Timer() as t:
        for f, holomorphic in families.values():
            rep = V.minimality_experiment(plane, p, f, [-0.2, -0.1, 0.1, 0.2], dt=0.025)
            ok_dev &= rep.within_error
            worst = min(worst, float(np.min(rep.deviations + rep.errors)))
            if holomorphic:
                convex &= bool(np.all(rep.second_differences >= -1e-6))
    ok = ok_dev and convex and t.seconds <= 300
    record(11, ok, f"deviations above -error {ok_dev} (min dev+err {worst:.2e}), polynomial convexity {convex}",
           t.seconds)
    assert ok


def test_12_spectral_pushforward(record):
    ref = S.elliptic_gauss(1.0)
    hist = M.IRManifold.real_space(1, 3.5, 1025)
    with Timer() as t:
        zr, zi, _ = Q.z_grid((-0.7, 0.5), (-0.6, 0.6), 41)
        cmap = Q.spectral_map(S.shifted_ring(0.3), ref, M.IRManifold.real_space(1, 3.5, 129), zr, zi,
                              hist_manifold=hist)
        lap, nu = cmap.rect_masses((-0.5, 0.3), (-0.4, 0.4))
        zr, zi, _ = Q.z_grid((-0.7, 0.5), (-0.3, 0.3), 41)
        rmap = Q.spectral_map(S.ring_zero(1), ref, M.IRManifold.real_space(1, 3.5, 385), zr, zi, hist_manifold=hist)
        off = rmap.off_axis_fraction()
    ratio = lap / (math.pi * nu)
    ok = abs(ratio - 1) <= 0.03 and off <= 0.01 and t.seconds <= 300
    record(12, ok, f"Laplacian mass / (pi x pushforward) = {ratio:.4f}, off-axis fraction {off:.2e}", t.seconds)
    assert ok


def test_13_geometric_identities(record):
    with Timer() as t:
        out = cli.RUNNERS["identities"](cli.ExperimentConfig.from_dict({"experiment": "identities"}))
    failed = [k for k, v in out.assertions.items() if not v]
    ok = not failed and t.seconds <= 30
    record(13, ok, f"{len(out.assertions) - len(failed)}/{len(out.assertions)} residual checks pass"
                   + (f", failing {failed}" if failed else ""), t.seconds)
    assert ok
