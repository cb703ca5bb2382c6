import math

import numpy as np
import pytest

from scipy.special import spence

from phaseflow import quantize as Q
from phaseflow import symbols as S
from phaseflow.manifolds import IRManifold


@pytest.mark.parametrize("symbol", [S.elliptic_gauss(0.5), S.ring_zero(1), S.ring_zero(2), S.shifted_ring(0.3)],
                         ids=lambda s: s.name)
def test_trace_matches_phase_space_integral(symbol):
    h = 0.1
    op = Q.weyl_matrix(symbol, h)
    integral = sum(c * math.pi / a for c, a, _ in symbol.gauss_terms)
    assert abs(op.trace_K() * 2 * math.pi * h - integral) <= 1e-10 * abs(integral)


@pytest.mark.parametrize("symbol", [S.ring_zero(1), S.shifted_ring(0.3)], ids=lambda s: s.name)
def test_log_det_converged_in_N(symbol):
    a = Q.log_abs_det(Q.weyl_matrix(symbol, 0.1, N=512)).value
    b = Q.log_abs_det(Q.weyl_matrix(symbol, 0.1, N=1024)).value
    assert abs(a - b) < 1e-10


def test_quadrature_kernel_matches_closed_form():
    p = S.elliptic_gauss(0.5)
    a = Q.weyl_matrix(p, 0.1).matrix
    b = Q.weyl_matrix(p, 0.1, force_quadrature=True).matrix
    assert np.max(np.abs(a - b)) < 1e-12


@pytest.mark.parametrize("h", [0.1, 0.2])
def test_gaussian_eigenvalues(h):
    # Weyl symbol exp(-(x^2 + xi^2)) has eigenvalues (1/(1+h)) ((1-h)/(1+h))^k
    op = Q.weyl_matrix(S.elliptic_gauss(0.5), h)
    ev = np.sort(np.linalg.eigvals(op.matrix - np.eye(op.N)).real)[::-1][:6]
    expected = [0.5 / (1 + h) * ((1 - h) / (1 + h)) ** k for k in range(6)]
    assert ev == pytest.approx(expected, rel=1e-9)


def test_real_symbol_gives_hermitian_matrix():
    A = Q.weyl_matrix(S.ring_zero(1), 0.1).matrix
    assert np.max(np.abs(A - A.conj().T)) < 1e-14


def test_resolution_refusal():
    with pytest.raises(Q.ResolutionError) as info:
        Q.weyl_matrix(S.ring_zero(1), 0.05, N=128)
    assert info.value.suggested_N == 924
    Q.weyl_matrix(S.ring_zero(1), 0.05, N=Q.n_rule(0.05))


@pytest.mark.parametrize("kwargs", [dict(h=0.0), dict(h=1.5), dict(h=0.1, N=511)])
def test_argument_validation(kwargs):
    with pytest.raises(ValueError):
        Q.weyl_matrix(S.ring_zero(1), **kwargs)


def test_log_abs_det_similarity_invariant(rng):
    A = Q.weyl_matrix(S.shifted_ring(0.3), 0.2, N=512).matrix
    D = np.diag(np.exp(rng.normal(size=A.shape[0]) * 0.1))
    base = Q.log_abs_det(A).value
    assert Q.log_abs_det(D @ A @ np.linalg.inv(D)).value == pytest.approx(base, abs=1e-9)


@pytest.mark.parametrize("h,N", [(0.1, 512), (0.05, 1024), (0.01, 8192), (0.025, 2048)])
def test_n_rule(h, N):
    assert Q.n_rule(h) == N


def test_slack_envelope_covers_family():
    fam = [S.elliptic_gauss(c) for c in (0.5, -0.5)]
    sl = Q.calibrate_slack(fam, [0.2, 0.1])
    for p in fam:
        for h, _, _, _, err in Q.elliptic_logdet_compare(p, [0.2, 0.1]).rows:
            assert err <= sl(h) + 1e-15


def test_elliptic_target_defaults_to_functional():
    r = Q.elliptic_logdet_compare(S.elliptic_gauss(0.5), [0.2, 0.1])
    assert r.target == pytest.approx(-math.pi * spence(1.5), rel=1e-4)


def test_spectral_laplacian_mass_complex_case():
    zr, zi, _ = Q.z_grid((-0.7, 0.5), (-0.6, 0.6), 41)
    sm = Q.spectral_map(S.shifted_ring(0.3), S.elliptic_gauss(1.0), IRManifold.real_space(1, 3.5, 129), zr, zi,
                        hist_manifold=IRManifold.real_space(1, 3.5, 1025))
    lap, nu = sm.rect_masses((-0.5, 0.3), (-0.4, 0.4))
    assert lap / (math.pi / 2 * nu) == pytest.approx(1.0, abs=0.05)


def test_oscillator_pushforward_scaling():
    p = S.oscillator_quadratic(1, 1, 0.5, 0.0)
    r = [0.025, 0.05, 0.1]
    res = Q.pushforward_comparison(p, p, r, model_mass=Q.oscillator_disc_mass(1, 1), action_nodes=80, angle_nodes=8)
    assert res.slope == pytest.approx(2.0, abs=0.1)
    assert res.dominated and res.constant == 0.0
    assert np.all(np.abs(res.model_ratio - 1) < 0.1)
