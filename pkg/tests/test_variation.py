import math

import numpy as np
import pytest

from phaseflow import functional as F
from phaseflow import manifolds as M
from phaseflow import symbols as S
from phaseflow import variation as V


@pytest.fixture(scope="module")
def plane():
    return M.IRManifold.real_space(1, 4.0, 301)


@pytest.fixture(scope="module")
def bump():
    return M.gaussian_bump(1, [0.5, 0.2], 0.8)


def test_bracket_and_chain_forms_agree(plane, bump):
    p = S.shifted_ring(0.3)
    a = V.gradient_pairing_eps(plane, p, bump, 0.1)
    b = V.gradient_pairing_eps(plane, p, bump, 0.1, form="chain")
    assert a == pytest.approx(b, rel=1e-4)


def test_pairing_matches_finite_difference(plane, bump):
    p = S.shifted_ring(0.3)
    assert V.gradient_pairing_eps(plane, p, bump, 0.1, form="chain") == pytest.approx(
        V.first_difference(plane, p, bump, 0.1), rel=1e-6)


def test_pairing_vector_form(plane, bump):
    p = S.shifted_ring(0.3)
    gens = [bump, M.coordinate(1, 0)]
    both = V.gradient_pairing_eps(plane, p, gens, 0.1)
    assert both.shape == (2,)
    assert both[0] == pytest.approx(V.gradient_pairing_eps(plane, p, bump, 0.1))


def test_pairing_linear_in_generator(plane, bump):
    p = S.shifted_ring(0.3)
    g = M.coordinate(1, 1)
    lhs = V.gradient_pairing_eps(plane, p, bump.scaled(2.0) + g, 0.1)
    rhs = 2 * V.gradient_pairing_eps(plane, p, bump, 0.1) + V.gradient_pairing_eps(plane, p, g, 0.1)
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_elliptic_symbol_has_zero_gradient(plane, bump):
    # log p is holomorphic on real space when p has no zeros
    assert abs(V.gradient_pairing_eps(plane, S.elliptic_gauss(0.5), bump, 0.05)) < 1e-6


def test_autonomous_hessian(plane, bump):
    p = S.shifted_ring(0.3)
    h = V.hessian_autonomous(plane, p, bump, 0.1)
    assert h >= 0
    assert h == pytest.approx(V.second_difference(plane, p, bump, 0.1, h=1e-2), rel=1e-3)


def test_nonautonomous_hessian(plane, bump):
    p = S.shifted_ring(0.3)
    fam = M.nonautonomous(bump, M.coordinate(1, 0, 0.5))
    assert V.hessian_nonautonomous(plane, p, fam, 0.1) == pytest.approx(
        V.second_difference(plane, p, fam, 0.1, h=1e-2), rel=1e-3)


@pytest.mark.parametrize("symbol,kind", [(S.shifted_ring(0.3), "codim2"), (S.ring_zero(1), "codim1"),
                                         (S.ring_zero(2), "codim1")], ids=["shifted", "ring1", "ring2"])
def test_zero_codimension(plane, symbol, kind):
    assert V.zero_codimension(plane, symbol) == kind


def test_pairing_exponents():
    assert V.pairing_exponents("codim2", 1, 4) == (2.0, 2.0, 4.0, 4.0)
    assert V.pairing_exponents("codim1", 1, 3) == (1.0, 2.0, 3.0)


def test_find_zeros_and_indices():
    assert V.find_zeros_1d(lambda x: x * x - 1, 6.0) == pytest.approx([-1.0, 1.0])
    assert V.sign_change_index(lambda x: x, 0.0) == 1
    assert V.sign_change_index(lambda x: -x, 0.0) == -1
    assert V.sign_change_index(lambda x: x * x, 0.0) == 0


def _f(x, xi):
    return np.exp(-(x - 0.3) ** 2 - 0.5 * xi**2) * (1 + 0.2 * xi)


@pytest.mark.parametrize("r,dr,sign", [(lambda x: x, lambda x: 1.0, 1), (lambda x: -x, lambda x: -1.0, -1),
                                       (lambda x: x * x, lambda x: 2 * x, 0)], ids=["x", "-x", "x2"])
def test_index_formula(r, dr, sign):
    res = V.index_gradient_1d(r, dr, _f)
    assert res.value == pytest.approx(sign * math.pi * _f(0.0, 0.0), abs=1e-5)


def test_predicted_jump_rotation_breaking():
    jump, pts, margin = V.predicted_jump(S.ring_zero(), M.coordinate(1, 0), 4.0)
    assert jump == pytest.approx(8 * math.pi * math.sqrt(math.log(2)), rel=1e-8)
    assert margin > 0


def test_minimality_requires_critical_manifold(plane, bump):
    with pytest.raises(V.NotCriticalError):
        V.minimality_experiment(plane, S.shifted_ring(0.3), bump, [0.1])


def test_descent_decreases_functional():
    m = M.IRManifold.real_space(1, 4.0, 201)
    basis = [M.coordinate(1, 0), M.coordinate(1, 1)]
    res = V.minimize(m, S.shifted_ring(0.3), basis, steps=3, eps0=0.1, step0=0.02)
    assert res.status in ("critical", "converged", "max_steps")
    for _, before, after in res.accepted_pairs:
        assert after <= before
    assert len(res.log) >= 1
