"""Holomorphic phase-space symbols and the canonical complex symplectic structure.

Points of complex phase space are arrays of shape ``(..., 2n)`` ordered as
``(x_1, ..., x_n, xi_1, ..., xi_n)``.  Symbols are closed-form expression
trees, so values, gradients and Hessians are exact (no finite differences).

Sign conventions: the symplectic form is ``sigma = sum_j dxi_j ^ dx_j``, the
Hamilton field of ``f`` is ``H_f = (df/dxi, -df/dx)`` and the Poisson bracket
is ``{f, g} = sigma(H_f, H_g) = sum_j (f_xi g_x - f_x g_xi)``, so that
``{xi, x} = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class DomainError(ValueError):
    """A point lies outside the tube where a symbol is declared holomorphic."""


class ValidationError(ValueError):
    """Symbol parameters fail a declared constraint."""


# ----------------------------------------------------------------------------
# expression trees with exact derivatives
# ----------------------------------------------------------------------------


def _as_points(rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.ndim == 1:
        rho = rho[None, :]
    return rho


class Expr:
    """Closed-form holomorphic expression in the phase-space coordinates.

    ``eval(rho, order)`` returns ``(value, grad, hess)`` with shapes ``(N,)``,
    ``(N, d)`` and ``(N, d, d)``; ``hess`` is ``None`` when ``order < 2``.
    """

    def eval(self, rho: np.ndarray, order: int = 1):  # pragma: no cover - abstract
        raise NotImplementedError

    # arithmetic sugar -------------------------------------------------------
    def __add__(self, other):
        return Add((self, _lift(other)))

    __radd__ = __add__

    def __sub__(self, other):
        return Add((self, Scale(-1.0, _lift(other))))

    def __rsub__(self, other):
        return Add((_lift(other), Scale(-1.0, self)))

    def __neg__(self):
        return Scale(-1.0, self)

    def __mul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return Scale(complex(other), self)
        return Mul(self, _lift(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return Scale(1.0 / complex(other), self)
        return Mul(self, Recip(_lift(other)))

    def __rtruediv__(self, other):
        return Mul(_lift(other), Recip(self))

    def __pow__(self, k):
        if int(k) != k or k < 0:
            raise ValueError("only non-negative integer powers are supported")
        return Pow(self, int(k))


def _lift(obj) -> Expr:
    if isinstance(obj, Expr):
        return obj
    if isinstance(obj, HolomorphicSymbol):
        return obj.expr
    return Const(complex(obj))


def _zeros(rho, order):
    n, d = rho.shape
    g = np.zeros((n, d), dtype=np.complex128)
    H = np.zeros((n, d, d), dtype=np.complex128) if order >= 2 else None
    return g, H


@dataclass(frozen=True)
class Const(Expr):
    c: complex

    def eval(self, rho, order=1):
        g, H = _zeros(rho, order)
        return np.full(rho.shape[0], self.c, dtype=np.complex128), g, H


@dataclass(frozen=True)
class Coord(Expr):
    index: int

    def eval(self, rho, order=1):
        g, H = _zeros(rho, order)
        g[:, self.index] = 1.0
        return rho[:, self.index].copy(), g, H


@dataclass(frozen=True)
class Add(Expr):
    terms: tuple

    def eval(self, rho, order=1):
        v = 0
        g = 0
        H = 0 if order >= 2 else None
        for t in self.terms:
            tv, tg, tH = t.eval(rho, order)
            v = v + tv
            g = g + tg
            if order >= 2:
                H = H + tH
        return v, g, H


@dataclass(frozen=True)
class Scale(Expr):
    c: complex
    arg: Expr

    def eval(self, rho, order=1):
        v, g, H = self.arg.eval(rho, order)
        return self.c * v, self.c * g, (self.c * H if H is not None else None)


@dataclass(frozen=True)
class Mul(Expr):
    a: Expr
    b: Expr

    def eval(self, rho, order=1):
        av, ag, aH = self.a.eval(rho, order)
        bv, bg, bH = self.b.eval(rho, order)
        v = av * bv
        g = ag * bv[:, None] + av[:, None] * bg
        H = None
        if order >= 2:
            cross = ag[:, :, None] * bg[:, None, :]
            H = aH * bv[:, None, None] + av[:, None, None] * bH + cross + np.swapaxes(cross, 1, 2)
        return v, g, H


@dataclass(frozen=True)
class Exp(Expr):
    arg: Expr

    def eval(self, rho, order=1):
        uv, ug, uH = self.arg.eval(rho, order)
        v = np.exp(uv)
        g = ug * v[:, None]
        H = None
        if order >= 2:
            H = (uH + ug[:, :, None] * ug[:, None, :]) * v[:, None, None]
        return v, g, H


@dataclass(frozen=True)
class Pow(Expr):
    arg: Expr
    k: int

    def eval(self, rho, order=1):
        uv, ug, uH = self.arg.eval(rho, order)
        k = self.k
        if k == 0:
            g, H = _zeros(rho, order)
            return np.ones(rho.shape[0], dtype=np.complex128), g, H
        v = uv**k
        d1 = k * uv ** (k - 1)
        g = ug * d1[:, None]
        H = None
        if order >= 2:
            d2 = k * (k - 1) * uv ** (k - 2) if k >= 2 else np.zeros_like(uv)
            H = uH * d1[:, None, None] + ug[:, :, None] * ug[:, None, :] * d2[:, None, None]
        return v, g, H


@dataclass(frozen=True)
class Recip(Expr):
    arg: Expr

    def eval(self, rho, order=1):
        uv, ug, uH = self.arg.eval(rho, order)
        v = 1.0 / uv
        g = -ug * (v * v)[:, None]
        H = None
        if order >= 2:
            H = -uH * (v * v)[:, None, None] + 2.0 * ug[:, :, None] * ug[:, None, :] * (v**3)[:, None, None]
        return v, g, H


def coords(n: int):
    """Coordinate expressions ``(x_1..x_n, xi_1..xi_n)``."""
    xs = tuple(Coord(j) for j in range(n))
    xis = tuple(Coord(n + j) for j in range(n))
    return xs, xis


# ----------------------------------------------------------------------------
# symbols
# ----------------------------------------------------------------------------


@dataclass
class HolomorphicSymbol:
    """A holomorphic function on a tube around real phase space.

    ``decay_order`` is the declared order ``m`` of ``p - 1`` at infinity
    (``None`` if the symbol does not tend to 1), ``vanishing_order`` the
    maximal order ``m0`` of vanishing on real phase space (0 when elliptic).
    ``gauss_terms`` lists ``(c, alpha, b)`` with ``p = 1 + sum c *
    exp(-alpha*(x**2 + (xi - i*b)**2))`` when that closed form applies (n = 1).
    """

    name: str
    n: int
    expr: Expr
    tube_radius: float = 1.0
    decay_order: float | None = -12.0
    vanishing_order: int = 0
    params: dict = field(default_factory=dict)
    gauss_terms: tuple | None = None

    @property
    def dim(self) -> int:
        return 2 * self.n

    @property
    def decays(self) -> bool:
        return self.decay_order is not None

    def evaluate(self, rho, order: int = 1, check: bool = False):
        rho = _as_points(rho)
        if rho.shape[1] != self.dim:
            raise ValueError(f"{self.name}: expected points with {self.dim} coordinates, got {rho.shape[1]}")
        if check:
            check_tube(self, rho)
        return self.expr.eval(rho, order)

    def value(self, rho, check: bool = False) -> np.ndarray:
        return self.evaluate(rho, 1, check)[0]

    def grad(self, rho, check: bool = False) -> np.ndarray:
        return self.evaluate(rho, 1, check)[1]

    def value_grad(self, rho, check: bool = False):
        v, g, _ = self.evaluate(rho, 1, check)
        return v, g

    def hessian(self, rho) -> np.ndarray:
        return self.evaluate(rho, 2)[2]

    def __call__(self, rho):
        return self.value(rho)

    def describe(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "params": {k: _jsonable(v) for k, v in self.params.items()},
            "tube_radius": self.tube_radius,
            "decay_order": self.decay_order,
            "vanishing_order": self.vanishing_order,
        }


def _jsonable(v):
    if isinstance(v, complex):
        return [v.real, v.imag] if v.imag else v.real
    if isinstance(v, HolomorphicSymbol):
        return v.describe()
    return v


def check_tube(symbol: HolomorphicSymbol, rho) -> None:
    """Raise :class:`DomainError` naming the first coordinate outside the tube."""
    rho = _as_points(rho)
    im = np.abs(rho.imag)
    bad = im > symbol.tube_radius
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        label = f"x_{j + 1}" if j < symbol.n else f"xi_{j - symbol.n + 1}"
        raise DomainError(
            f"{symbol.name}: |Im {label}| = {im[i, j]:.3g} exceeds tube radius {symbol.tube_radius:.3g}"
        )


def eval_symbol(symbol: HolomorphicSymbol, point) -> complex:
    """Value of ``symbol`` at a single point, with the tube check."""
    return complex(symbol.value(np.asarray(point, dtype=complex)[None, :], check=True)[0])


def eval_derivative(symbol: HolomorphicSymbol, point) -> np.ndarray:
    """Holomorphic gradient ``(dp/dx, dp/dxi)`` at a single point, with the tube check."""
    return symbol.grad(np.asarray(point, dtype=complex)[None, :], check=True)[0]


# ----------------------------------------------------------------------------
# symplectic algebra
# ----------------------------------------------------------------------------


def hamilton_field(grad: np.ndarray) -> np.ndarray:
    """``H_f = (df/dxi, -df/dx)`` from gradients of shape ``(..., 2n)``."""
    grad = np.asarray(grad)
    n = grad.shape[-1] // 2
    return np.concatenate([grad[..., n:], -grad[..., :n]], axis=-1)


def sigma(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Complex symplectic form ``sum_j u_xi v_x - u_x v_xi`` on vectors ``(..., 2n)``."""
    u = np.asarray(u)
    v = np.asarray(v)
    n = u.shape[-1] // 2
    return np.sum(u[..., n:] * v[..., :n] - u[..., :n] * v[..., n:], axis=-1)


def poisson_bracket_grads(gf: np.ndarray, gg: np.ndarray) -> np.ndarray:
    """``{f, g}`` from the gradients of ``f`` and ``g``."""
    return sigma(hamilton_field(gf), hamilton_field(gg))


def poisson_bracket(f: HolomorphicSymbol, g: HolomorphicSymbol, rho) -> np.ndarray:
    """Ambient Poisson bracket ``{f, g}`` at points ``rho``."""
    return poisson_bracket_grads(f.grad(rho), g.grad(rho))


def deformation_field(grad: np.ndarray) -> np.ndarray:
    """Complex velocity ``i H_f`` whose real part generates the deformation.

    For ``f = x_1`` this is ``xi_1' = -i``; for ``f = xi_1`` it is ``x_1' = i``.
    """
    return 1j * hamilton_field(grad)


def real_deformation_field(grad: np.ndarray) -> np.ndarray:
    """The real field ``2 Re(i H_f)`` as a real vector ``(Re v_0, Im v_0, Re v_1, ...)``."""
    return complex_to_real(deformation_field(grad))


def complex_to_real(v: np.ndarray) -> np.ndarray:
    """Interleave real and imaginary parts: ``(..., d)`` complex to ``(..., 2d)`` real."""
    v = np.asarray(v, dtype=np.complex128)
    out = np.empty(v.shape[:-1] + (2 * v.shape[-1],))
    out[..., 0::2] = v.real
    out[..., 1::2] = v.imag
    return out


def real_to_complex(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    return w[..., 0::2] + 1j * w[..., 1::2]


def real_form_matrix(n: int, part: str) -> np.ndarray:
    """Matrix ``A[k, l] = alpha(e_k, e_l)`` of ``Re sigma`` or ``Im sigma`` in real coordinates."""
    d = 2 * n
    basis = np.zeros((2 * d, d), dtype=np.complex128)
    for k in range(d):
        basis[2 * k, k] = 1.0
        basis[2 * k + 1, k] = 1j
    vals = sigma(basis[:, None, :], basis[None, :, :])
    if part == "re":
        return vals.real
    if part == "im":
        return vals.imag
    raise ValueError("part must be 're' or 'im'")


def real_hamilton_field(real_grad: np.ndarray, n: int, part: str) -> np.ndarray:
    """Hamilton field of a real function for ``Re sigma`` or ``Im sigma``.

    Defined by ``alpha(H, t) = -dg(t)``; ``real_grad`` is the gradient in the
    interleaved real coordinates.
    """
    A = real_form_matrix(n, part)
    real_grad = np.asarray(real_grad, dtype=np.float64)
    return np.linalg.solve(A, real_grad[..., None])[..., 0]


def holomorphic_real_gradient(grad: np.ndarray) -> np.ndarray:
    """Real gradient of ``Re f`` for holomorphic ``f`` in interleaved coordinates."""
    grad = np.asarray(grad, dtype=np.complex128)
    out = np.empty(grad.shape[:-1] + (2 * grad.shape[-1],))
    out[..., 0::2] = grad.real
    out[..., 1::2] = -grad.imag
    return out


# ----------------------------------------------------------------------------
# catalog
# ----------------------------------------------------------------------------


def _gauss_expr(n: int, alpha: float, shift: float) -> Expr:
    xs, xis = coords(n)
    q = None
    for j in range(n):
        term = xs[j] ** 2 + (xis[j] - 1j * shift) ** 2
        q = term if q is None else q + term
    return Exp(Scale(-alpha, q))


def elliptic_gauss(c: complex = 0.5, b: float = 0.0, n: int = 1) -> HolomorphicSymbol:
    """``1 + c exp(-(x^2 + (xi - i b)^2))``; nonvanishing on real space unless ``c <= -1`` is real."""
    c = complex(c)
    if c.imag == 0 and c.real <= -1:
        raise ValidationError("elliptic_gauss: real c <= -1 vanishes on real phase space")
    expr = 1.0 + c * _gauss_expr(n, 1.0, b)
    return HolomorphicSymbol(
        "elliptic_gauss", n, expr, params={"c": c, "b": b}, vanishing_order=0,
        gauss_terms=((c, 1.0, b),) if n == 1 else None,
    )


def ring_zero(power: int = 1, n: int = 1) -> HolomorphicSymbol:
    """``(1 - 2 exp(-|rho|^2))**power``: real, vanishing to order ``power`` on ``|rho|^2 = log 2``."""
    if power < 1:
        raise ValidationError("ring_zero: power must be >= 1")
    base = 1.0 - 2.0 * _gauss_expr(n, 1.0, 0.0)
    expr = base if power == 1 else Pow(base, power)
    terms = None
    if n == 1:
        terms = tuple((complex(math.comb(power, j) * (-2.0) ** j), float(j), 0.0) for j in range(1, power + 1))
    return HolomorphicSymbol(
        "ring_zero", n, expr, params={"power": power}, vanishing_order=power, gauss_terms=terms
    )


def shifted_ring(b: float = 0.3) -> HolomorphicSymbol:
    """``1 - 2 exp(-(x^2 + (xi - i b)^2))``, the ring symbol seen on a shifted real section."""
    expr = 1.0 - 2.0 * _gauss_expr(1, 1.0, b)
    return HolomorphicSymbol(
        "shifted_ring", 1, expr, params={"b": b}, vanishing_order=1,
        tube_radius=1.0 + abs(b), gauss_terms=((-2.0 + 0j, 1.0, b),),
    )


def torus_codim2() -> HolomorphicSymbol:
    """``(x1^2 + xi1^2 - 1) + i (x2^2 + xi2^2 - 1)``; zero set is the Clifford torus."""
    (x1, x2), (y1, y2) = coords(2)
    expr = (x1**2 + y1**2 - 1.0) + 1j * (x2**2 + y2**2 - 1.0)
    return HolomorphicSymbol("torus_codim2", 2, expr, decay_order=None, vanishing_order=1)


def graph_codim2() -> HolomorphicSymbol:
    """``xi1 + i (xi2 + x1^2 + x2^2 - 1)``; zero set is a graph over the x-plane."""
    (x1, x2), (y1, y2) = coords(2)
    expr = y1 + 1j * (y2 + x1**2 + x2**2 - 1.0)
    return HolomorphicSymbol("graph_codim2", 2, expr, decay_order=None, vanishing_order=1)


def oscillator_quadratic(mu1: float = 1.0, mu2: float = 1.0, beta: float = 0.5, gamma: float = 0.0) -> HolomorphicSymbol:
    """``1 - exp(-(mu1*i1 - i*mu2*i2) - beta*(i1 + i2)^2 - gamma*x1*i1)`` with actions ``i_j``.

    Near the origin this is ``mu1*i1 - i*mu2*i2`` up to a remainder of order
    ``|rho|^4`` (``|rho|^3`` when ``gamma != 0``); it tends to 1 at infinity.
    """
    if mu1 <= 0 or mu2 <= 0 or beta <= 0:
        raise ValidationError("oscillator_quadratic: mu1, mu2 and beta must be positive")
    (x1, x2), (y1, y2) = coords(2)
    i1 = 0.5 * (x1**2 + y1**2)
    i2 = 0.5 * (x2**2 + y2**2)
    s = i1 + i2
    arg = mu1 * i1 - 1j * mu2 * i2 + beta * s**2
    if gamma:
        arg = arg + gamma * x1 * i1
    expr = 1.0 - Exp(-1.0 * arg)
    return HolomorphicSymbol(
        "oscillator_quadratic", 2, expr,
        params={"mu1": mu1, "mu2": mu2, "beta": beta, "gamma": gamma},
        vanishing_order=2, tube_radius=0.5,
    )


def relative(p: HolomorphicSymbol, p_ref: HolomorphicSymbol | complex = 1.0, z: complex = 0.0) -> HolomorphicSymbol:
    """``(p - z) / (p_ref - z)``; the reference must not take the value ``z``."""
    ref = p_ref if isinstance(p_ref, HolomorphicSymbol) else None
    if ref is None and complex(p_ref) == complex(z):
        raise ValidationError("relative: reference value equals z")
    expr = (p.expr - z) / (_lift(p_ref) - z)
    return HolomorphicSymbol(
        "relative", p.n, expr, tube_radius=p.tube_radius, decay_order=p.decay_order,
        vanishing_order=p.vanishing_order, params={"p": p, "z": complex(z)},
    )


def perturbed(p: HolomorphicSymbol, q: Expr | HolomorphicSymbol, z: complex) -> HolomorphicSymbol:
    """``p + z q``."""
    expr = p.expr + complex(z) * _lift(q)
    return HolomorphicSymbol(
        f"{p.name}+z*q", p.n, expr, tube_radius=p.tube_radius, decay_order=p.decay_order,
        vanishing_order=p.vanishing_order, params={**p.params, "z": complex(z)},
    )


def from_expr(name: str, n: int, expr: Expr, **kwargs) -> HolomorphicSymbol:
    return HolomorphicSymbol(name, n, expr, **kwargs)


CATALOG: dict[str, tuple[Callable[..., HolomorphicSymbol], str]] = {
    "elliptic_gauss": (elliptic_gauss, "1 + c exp(-(x^2 + (xi - ib)^2)); params c, b"),
    "ring_zero": (ring_zero, "(1 - 2 exp(-(x^2 + xi^2)))^power; real, zero on a circle; params power, n"),
    "shifted_ring": (shifted_ring, "1 - 2 exp(-(x^2 + (xi - ib)^2)); params b"),
    "torus_codim2": (torus_codim2, "(x1^2 + xi1^2 - 1) + i(x2^2 + xi2^2 - 1); no params"),
    "graph_codim2": (graph_codim2, "xi1 + i(xi2 + x1^2 + x2^2 - 1); no params"),
    "relative": (relative, "(p - z)/(p_ref - z); params p (catalog entry), p_ref, z"),
    "oscillator_quadratic": (oscillator_quadratic, "1 - exp(-(mu1 i1 - i mu2 i2) - beta (i1+i2)^2 - gamma x1 i1)"),
}


def builtin_symbol(name: str, params: dict | None = None) -> HolomorphicSymbol:
    """Build a catalog symbol from JSON-style parameters."""
    params = dict(params or {})
    if name not in CATALOG:
        raise ValidationError(f"unknown symbol {name!r}; available: {sorted(CATALOG)}")
    if name == "relative":
        inner = params.pop("p", {"name": "ring_zero"})
        p = builtin_symbol(inner["name"], inner.get("params"))
        ref = params.pop("p_ref", 1.0)
        if isinstance(ref, dict):
            ref = builtin_symbol(ref["name"], ref.get("params"))
        z = _parse_complex(params.pop("z", 0.0))
        if params:
            raise ValidationError(f"relative: unexpected params {sorted(params)}")
        return relative(p, ref, z)
    if "c" in params:
        params["c"] = _parse_complex(params["c"])
    factory = CATALOG[name][0]
    try:
        return factory(**params)
    except TypeError as exc:
        raise ValidationError(f"{name}: {exc}") from None


def _parse_complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    return complex(v)
