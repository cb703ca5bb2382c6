import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import spence

from phaseflow import functional as F
from phaseflow import manifolds as M
from phaseflow import symbols as S

# closed forms in s = x^2 + xi^2, with dx dxi = pi ds
RING_I = -math.pi**3 / 4


def elliptic_I(c: float) -> float:
    # pi * int_0^inf log(1 + c e^-s) ds = -pi Li2(-c)
    return -math.pi * float(spence(1.0 + c))


@pytest.fixture(scope="module")
def plane():
    return M.IRManifold.real_space(1, 4.5, 801)


@pytest.mark.parametrize("c", [0.5, 0.3, 1.5])
def test_elliptic_value(plane, c):
    res = F.compute_I(plane, S.elliptic_gauss(c))
    assert res.value == pytest.approx(elliptic_I(c), abs=1e-8)


def test_elliptic_value_is_the_determinant_target(plane):
    assert F.compute_I(plane, S.elliptic_gauss(0.5)).value == pytest.approx(1.4087347782, abs=1e-8)


@pytest.mark.parametrize("power", [1, 2])
def test_ring_value_within_reported_error(plane, power):
    res = F.compute_I(plane, S.ring_zero(power))
    assert abs(res.value - power * RING_I) <= res.error


def test_trivial_symbol_gives_zero():
    res = F.compute_I(M.IRManifold.real_space(1, 3.0, 33), S.elliptic_gauss(0.0))
    assert res.value == pytest.approx(0.0, abs=1e-13)


@pytest.mark.parametrize("power,rate", [(1, 1.0), (2, 0.5)])
def test_regularization_rate(plane, power, rate):
    fit = F.rate_fit(plane, S.ring_zero(power), F.default_ladder(), limit=power * RING_I)
    assert fit.monotone
    assert fit.exponent == pytest.approx(rate, abs=0.15)


def test_sublevel_volume_of_ring():
    m = M.IRManifold.real_space(1, 3.0, 1201)
    deltas = np.array([0.05, 0.1, 0.2])
    vol = F.sublevel_volume(m, S.ring_zero(1), deltas)
    exact = math.pi * np.log((1 + deltas) / (1 - deltas))
    assert np.allclose(vol, exact, rtol=0.02)


def test_eps_functional_matches_ladder(plane):
    p = S.shifted_ring(0.3)
    v = F.compute_I_eps(plane, p, 0.1)
    sums, _ = F.ladder_sums(plane, p, [0.1])
    assert v.value == sums[0]
    assert v.tail_bound < 1e-6


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3))
@settings(max_examples=40)
def test_richardson_exact_on_power_series(coefs):
    eps = F.default_ladder(0.2, 5)
    exps = (1.0, 2.0, 3.0)
    vals = 1.25 + sum(c * eps**e for c, e in zip(coefs, exps))
    best, err, _ = F.extrapolate(eps, vals, exps)
    assert best == pytest.approx(1.25, abs=1e-9)


def test_richardson_repeated_exponent_removes_log_term():
    eps = F.default_ladder(0.2, 6)
    vals = 2.0 + 0.7 * eps**2 * np.log(eps) - 0.3 * eps**2 + 0.1 * eps**4
    best, _, _ = F.extrapolate(eps, vals, (2, 2, 4, 4, 6))
    assert best == pytest.approx(2.0, abs=1e-10)


def test_richardson_needs_geometric_ladder():
    with pytest.raises(ValueError):
        F.richardson(np.array([0.2, 0.1, 0.07]), np.zeros(3), (1, 2))


def test_monotone_check():
    assert F.check_monotone(np.array([1.0, 0.5, 0.25, 0.2]))
    assert not F.check_monotone(np.array([1.0, 0.5, 0.6]))
    assert F.check_monotone(np.array([1e-16, -1e-16, 2e-16]))


def test_non_decaying_symbol_rejected():
    with pytest.raises(F.DecayError):
        F.compute_I(M.IRManifold.real_space(2, 2.0, 5), S.torus_codim2())


def test_small_box_rejected():
    with pytest.raises(F.DecayError, match="enlarge R"):
        F.compute_I(M.IRManifold.real_space(1, 1.0, 33), S.ring_zero(1))


def test_backends_give_identical_sums(plane):
    p = S.ring_zero(1)
    a, _ = F.ladder_sums(plane, p, F.default_ladder(), backend="numba")
    b, _ = F.ladder_sums(plane, p, F.default_ladder(), backend="numpy")
    assert np.allclose(a, b, rtol=1e-12)


def test_functional_invariant_under_flow_for_elliptic():
    # log p is holomorphic near real space when p has no zeros: contour deformation leaves I unchanged
    m = M.flow(M.IRManifold.real_space(1, 4.5, 401), M.gaussian_bump(1, [0.3, 0.0], 1.0, [1, 0]), 0.2, 0.05)
    p = S.elliptic_gauss(0.5)
    assert F.compute_I(m, p).value == pytest.approx(elliptic_I(0.5), abs=1e-6)
