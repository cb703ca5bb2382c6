import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from phaseflow import symbols as S

finite = st.floats(-2.0, 2.0, allow_nan=False)
vec4 = arrays(np.float64, 4, elements=finite)

CATALOG_1D = [S.elliptic_gauss(0.5), S.elliptic_gauss(0.3 + 0.4j, b=0.2), S.ring_zero(1), S.ring_zero(2), S.shifted_ring(0.3)]
CATALOG_2D = [S.torus_codim2(), S.graph_codim2(), S.oscillator_quadratic(1.0, 2.0, 0.5, 0.3), S.ring_zero(1, n=2)]


@given(vec4, vec4)
def test_sigma_antisymmetric(u, v):
    assert S.sigma(u, v) == pytest.approx(-S.sigma(v, u), abs=1e-12)


@given(vec4, vec4, vec4)
@settings(max_examples=50)
def test_sigma_of_hamilton_fields_is_bracket(a, b, c):
    gf = a + 1j * b
    gg = c - 0.5j * a
    # sigma(H_f, H_g) equals H_f applied to g
    assert S.poisson_bracket_grads(gf, gg) == pytest.approx(np.dot(S.hamilton_field(gf), gg), abs=1e-10)
    assert S.poisson_bracket_grads(gf, gg) == pytest.approx(-S.poisson_bracket_grads(gg, gf), abs=1e-10)


def test_coordinate_bracket_sign():
    (x,), (xi,) = S.coords(1)
    fx = S.from_expr("x", 1, x, decay_order=None)
    fxi = S.from_expr("xi", 1, xi, decay_order=None)
    pt = np.array([[0.3, -0.2]], dtype=complex)
    assert S.poisson_bracket(fx, fxi, pt)[0] == pytest.approx(-1.0)
    assert S.poisson_bracket(fxi, fx, pt)[0] == pytest.approx(1.0)


def test_deformation_field_of_coordinates():
    v = S.deformation_field(np.array([1.0, 0.0]))
    assert np.allclose(v, [0.0, -1j])
    v = S.deformation_field(np.array([0.0, 1.0]))
    assert np.allclose(v, [1j, 0.0])


@pytest.mark.parametrize("symbol", CATALOG_1D + CATALOG_2D, ids=lambda s: f"{s.name}{s.n}")
def test_gradient_matches_complex_step(symbol, rng):
    rho = 0.7 * rng.normal(size=(5, symbol.dim)) + 0.1j * rng.normal(size=(5, symbol.dim))
    v, g = symbol.value_grad(rho)
    h = 1e-6
    for j in range(symbol.dim):
        e = np.zeros(symbol.dim)
        e[j] = h
        # holomorphic: derivative along a real step equals the complex derivative
        fd = (symbol.value(rho + e) - symbol.value(rho - e)) / (2 * h)
        assert np.allclose(g[:, j], fd, rtol=1e-7, atol=1e-8)


@pytest.mark.parametrize("symbol", CATALOG_1D + CATALOG_2D, ids=lambda s: f"{s.name}{s.n}")
def test_hessian_symmetric_and_matches_gradient(symbol, rng):
    rho = 0.6 * rng.normal(size=(3, symbol.dim)).astype(complex)
    H = symbol.hessian(rho)
    assert np.allclose(H, np.swapaxes(H, -1, -2), atol=1e-10)
    h = 1e-6
    for j in range(symbol.dim):
        e = np.zeros(symbol.dim)
        e[j] = h
        fd = (symbol.grad(rho + e) - symbol.grad(rho - e)) / (2 * h)
        assert np.allclose(H[:, :, j], fd, rtol=1e-6, atol=1e-7)


@pytest.mark.parametrize("symbol", CATALOG_1D, ids=lambda s: f"{s.name}{s.params}")
def test_gauss_terms_reproduce_values(symbol, rng):
    rho = rng.normal(size=(20, 2)) + 0.2j * rng.normal(size=(20, 2))
    x, xi = rho[:, 0], rho[:, 1]
    expect = 1.0 + sum(c * np.exp(-a * (x**2 + (xi - 1j * b) ** 2)) for c, a, b in symbol.gauss_terms)
    assert np.allclose(symbol.value(rho), expect, atol=1e-13)


def test_ring_zero_vanishes_on_circle():
    r = math.sqrt(math.log(2))
    th = np.linspace(0, 2 * np.pi, 7)
    pts = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
    assert np.max(np.abs(S.ring_zero(1).value(pts))) < 1e-14


def test_torus_zero_set():
    th = np.linspace(0, 2 * np.pi, 5)
    pts = np.stack([np.cos(th), np.cos(2 * th), np.sin(th), np.sin(2 * th)], axis=1)
    assert np.max(np.abs(S.torus_codim2().value(pts))) < 1e-14


def test_tube_check_names_coordinate():
    p = S.shifted_ring(0.3)
    with pytest.raises(S.DomainError, match="xi_1"):
        S.eval_symbol(p, [0.0, 2.0j])
    assert abs(S.eval_symbol(p, [0.1, 0.2j])) > 0


def test_elliptic_rejects_vanishing_parameter():
    with pytest.raises(S.ValidationError):
        S.elliptic_gauss(-1.5)


@pytest.mark.parametrize("name", sorted(S.CATALOG))
def test_catalog_builds_with_defaults(name):
    p = S.builtin_symbol(name)
    assert p.describe()["name"] in (name, "relative")


def test_builtin_symbol_errors():
    with pytest.raises(S.ValidationError, match="unknown symbol"):
        S.builtin_symbol("nope")
    with pytest.raises(S.ValidationError):
        S.builtin_symbol("ring_zero", {"bogus": 1})


def test_relative_symbol():
    p = S.ring_zero(1)
    q = S.relative(p, S.elliptic_gauss(1.0), 0.2 + 0.1j)
    pts = np.array([[0.3, 0.4], [1.0, -0.2]], dtype=complex)
    ref = S.elliptic_gauss(1.0).value(pts)
    assert np.allclose(q.value(pts), (p.value(pts) - (0.2 + 0.1j)) / (ref - (0.2 + 0.1j)))
    with pytest.raises(S.ValidationError):
        S.relative(p, 1.0, 1.0)
