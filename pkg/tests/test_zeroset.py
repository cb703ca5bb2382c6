import numpy as np
import pytest

from phaseflow import manifolds as M
from phaseflow import symbols as S
from phaseflow import zeroset as Z


@pytest.fixture(scope="module")
def real():
    return M.IRManifold.real_space(2, 2.0, 3)


@pytest.fixture(scope="module")
def torus(real):
    return Z.extract_sigma(real, S.torus_codim2())


@pytest.fixture(scope="module")
def grid():
    th = np.arange(64) * 2 * np.pi / 64
    return np.meshgrid(th, th, indexing="ij")


def test_torus_measure_and_density(torus):
    assert torus.total_measure() == pytest.approx(np.pi**2, rel=1e-12)
    assert np.allclose(torus.density, -0.25, atol=1e-12)
    assert np.max(np.abs(torus.bracket)) < 1e-12


def test_liouville_identity_on_torus(torus):
    chk = Z.liouville_check(torus)
    assert chk.pointwise_residual < 1e-12
    assert abs(chk.integral) < 1e-12


def test_graph_disc_bracket_is_twice_x1(real):
    sd = Z.extract_sigma(real, S.graph_codim2(), Z.graph_disc_seeds(), kind="disc")
    assert Z.liouville_check(sd).pointwise_residual < 1e-12
    x1 = sd.u.reshape(-1, 4)[:, 0]
    assert np.allclose(sd.bracket.ravel(), 2 * x1, atol=1e-10)


def test_perturbed_torus_is_not_critical(real, torus):
    (x1, x2), _ = S.coords(2)
    sp = Z.extract_sigma(real, S.perturbed(S.torus_codim2(), x1 * x2, 0.1), torus.u)
    assert Z.liouville_check(sp).pointwise_residual < 1e-10
    assert np.max(np.abs(sp.bracket)) > 1e-2


@pytest.fixture(scope="module")
def twisted(real, torus):
    (x1, _), (_, y2) = S.coords(2)
    q = 1.0 + 0.3 * x1 + 0.2j * y2
    p = S.from_expr("twisted", 2, S.torus_codim2().expr * q, decay_order=None, vanishing_order=1)
    return p, Z.extract_sigma(real, p, torus.u)


def test_transport_coefficient(real, twisted):
    p, surf = twisted
    a, alpha, G = Z.transport_coefficient(real, p, surf)
    assert np.max(np.abs(alpha - np.conj(a))) < 1e-8
    assert np.max(np.abs(G)) < 1e-10
    res = Z.lie_derivative_check(surf, a)
    assert max(res) < 1e-8


def test_adjoint_identity_variable_coefficients(real, twisted):
    p, surf = twisted
    a, _, _ = Z.transport_coefficient(real, p, surf)
    ops = Z.ChartOperators.from_surface(surf, a)
    rng = np.random.default_rng(1)
    u = Z.random_trig_poly(surf.shape, rng, 3, False)
    v = Z.random_trig_poly(surf.shape, rng, 3, False)
    r = Z.adjoint_identity_check(ops, u, v)
    assert r.mean_residual < 1e-8 and r.adjoint_residual < 1e-7
    chk = Z.operator_checks(ops)
    assert chk.imaginary_part < 1e-10 and chk.self_adjoint < 1e-10


def test_torus_chart_operator(torus):
    ops = Z.ChartOperators.from_surface(torus)
    assert ops.constant_coefficients
    chk = Z.operator_checks(ops)
    assert chk.constants_residual < 1e-12
    assert chk.smallest_nonzero == pytest.approx(4.0)
    assert chk.self_adjoint < 1e-12


def test_solve_correction_closed_form(real, torus, grid):
    (x1, x2), _ = S.coords(2)
    ops = Z.ChartOperators.from_surface(torus)
    sol = Z.solve_correction(ops, Z.correction_rhs(real, torus, x1 * x2))
    t1, t2 = grid
    assert sol.residual < 1e-11
    assert np.max(np.abs(sol.delta_f - 0.25 * np.cos(t1) * np.sin(t2))) < 1e-12
    ext = Z.torus_extension(np.asarray(sol.delta_f).real)
    assert [b.exps for b in ext.basis] == [(1, 0, 0, 1)]
    assert np.asarray(ext.coefficients).ravel()[0] == pytest.approx(0.25)


def test_solvability_error_on_nonzero_mean(torus):
    ops = Z.ChartOperators.from_surface(torus)
    with pytest.raises(Z.SolvabilityError):
        Z.solve_correction(ops, np.ones(torus.shape))


@pytest.mark.parametrize("mode,expected", [((1, 1), np.pi**3 / 8), ((1, -1), np.pi**3 / 8)])
def test_levi_form(torus, grid, mode, expected):
    t1, t2 = grid
    lf = Z.levi_form(torus, np.cos(mode[0] * t1) * np.cos(mode[1] * t2))
    assert lf.fixed == pytest.approx(expected, rel=1e-12)
    assert lf.corrected < 1e-20


def test_correction_raises_bracket_order():
    (x1, x2), _ = S.coords(2)
    r = Z.correction_experiment(x1 * x2)
    assert r.slope_uncorrected == pytest.approx(1.0, abs=0.05)
    assert r.slope_corrected > 1.8
    assert np.all(r.corrected < r.uncorrected)
