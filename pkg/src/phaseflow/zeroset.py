"""Codimension-2 zero sets of a symbol on a manifold, in dimension ``n = 2``.

A zero surface is sampled on a chart: the periodic angle chart of a torus
``(theta1, theta2) -> (cos theta1, cos theta2, sin theta1, sin theta2)`` or
a disc chart over the ``x``-plane.  Chart nodes are projected onto
``{Re p = Im p = 0}`` by Newton steps in base coordinates of the manifold.

With ``A = Re p``, ``B = Im p`` the Liouville density ``lambda`` is defined
by ``lambda ^ dA ^ dB = sigma^2 / 2`` and evaluated on chart tangents
``S1, S2`` through the frame determinant identity

    lambda(S1, S2) * (dA ^ dB)(N1, N2) = Pf(omega) det[S1, S2, N1, N2]

with ``N1 = grad A``, ``N2 = grad B``.  ``(i/2){p, conj p} = {A, B}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .manifolds import GeneratorFunction, IRManifold, BasisElement, flow, frame_sigma, pfaffian
from .symbols import Expr, HolomorphicSymbol, _lift, perturbed, torus_codim2


class NewtonError(RuntimeError):
    """Newton projection onto the zero set did not converge."""


class IndependenceError(ValueError):
    """``d Re p`` and ``d Im p`` are (nearly) dependent at a zero."""


class SolvabilityError(ValueError):
    """The right-hand side of the correction equation has a nonzero mean."""

    def __init__(self, mean: float):
        super().__init__(f"right-hand side mean {mean:.3e} exceeds tolerance; the equation is not solvable")
        self.mean = mean


# ----------------------------------------------------------------------------
# pointwise data at base coordinates
# ----------------------------------------------------------------------------


@dataclass
class PointData:
    rho: np.ndarray
    p: np.ndarray
    dA: np.ndarray  # (k, 4) gradient of Re p in base coordinates
    dB: np.ndarray
    omega: np.ndarray  # (k, 4, 4) restricted real form
    omega_inv: np.ndarray

    @property
    def bracket_AB(self) -> np.ndarray:
        """``{A, B} = (i/2){p, conj p}``."""
        return np.einsum("ka,kab,kb->k", self.dB, self.omega_inv, self.dA)

    def hamilton(self, grad: np.ndarray) -> np.ndarray:
        """Hamilton field ``omega^{-1} grad`` in base coordinates."""
        return np.einsum("kab,kb->ka", self.omega_inv, grad)


def point_data(manifold: IRManifold, symbol: HolomorphicSymbol, u: np.ndarray) -> PointData:
    u = np.atleast_2d(np.asarray(u, dtype=float))
    rho, T = manifold.map_points(u)
    p, gp = symbol.value_grad(rho)
    dP = np.einsum("kj,kja->ka", gp, T)
    omega = frame_sigma(T).real
    return PointData(rho, p, dP.real, dP.imag, omega, np.linalg.inv(omega))


def newton_project(
    manifold: IRManifold,
    symbol: HolomorphicSymbol,
    seeds: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 50,
    cond_max: float = 1e8,
) -> np.ndarray:
    """Minimum-norm Newton iteration from ``seeds`` onto ``{p = 0}``."""
    u = np.array(seeds, dtype=float, copy=True)
    for _ in range(max_iter):
        d = point_data(manifold, symbol, u)
        F = np.stack([d.p.real, d.p.imag], axis=1)
        if np.max(np.abs(F)) <= tol:
            break
        J = np.stack([d.dA, d.dB], axis=1)  # (k, 2, 4)
        s = np.linalg.svd(J, compute_uv=False)
        cond = s[:, 0] / np.maximum(s[:, -1], 1e-300)
        if np.max(cond) > cond_max:
            k = int(np.argmax(cond))
            raise IndependenceError(f"d Re p and d Im p are dependent near node {k}: condition number {cond[k]:.3e}")
        JJt = np.einsum("kia,kja->kij", J, J)
        step = np.einsum("kia,ki->ka", J, np.linalg.solve(JJt, F[..., None])[..., 0])
        u -= step
    else:
        d = point_data(manifold, symbol, u)
        res = float(np.max(np.abs(d.p)))
        if res > tol:
            raise NewtonError(f"Newton did not converge in {max_iter} iterations: residual {res:.3e}")
    return u


# ----------------------------------------------------------------------------
# spectral calculus on the periodic chart
# ----------------------------------------------------------------------------


def _wavenumbers(M: int) -> np.ndarray:
    k = np.fft.fftfreq(M, d=1.0 / M)
    return k


def spectral_derivative(values: np.ndarray, axis: int) -> np.ndarray:
    """Derivative in ``theta_axis`` of samples on a uniform periodic grid (first two axes)."""
    M = values.shape[axis]
    k = _wavenumbers(M)
    if M % 2 == 0:
        k[M // 2] = 0.0
    shape = [1] * values.ndim
    shape[axis] = M
    out = np.fft.ifft(1j * k.reshape(shape) * np.fft.fft(values, axis=axis), axis=axis)
    return out if np.iscomplexobj(values) else out.real


# ----------------------------------------------------------------------------
# zero surfaces
# ----------------------------------------------------------------------------


@dataclass
class ZeroSurface:
    kind: str  # "torus" (periodic chart) or "disc" (open chart)
    shape: tuple
    u: np.ndarray  # (M1, M2, 4) base coordinates
    tangents: np.ndarray  # (M1, M2, 4, 2) chart tangents d u / d s_k
    chart_weights: np.ndarray  # (M1, M2) quadrature weights in chart coordinates
    density: np.ndarray  # (M1, M2) signed lambda(S1, S2)
    bracket: np.ndarray  # (M1, M2) (i/2){p, conj p}
    omega_tangent: np.ndarray  # (M1, M2) omega(S1, S2)
    data: PointData

    @property
    def measure(self) -> np.ndarray:
        """Liouville measure weights per node."""
        return np.abs(self.density) * self.chart_weights

    def total_measure(self) -> float:
        return float(np.sum(self.measure))

    def integrate(self, values: np.ndarray) -> complex | float:
        return np.sum(values * self.measure)

    def chart_field(self, vec: np.ndarray) -> np.ndarray:
        """Chart components of base-space tangent vectors ``(M1, M2, 4)``, by least squares."""
        S = self.tangents
        StS = np.einsum("...ai,...aj->...ij", S, S)
        rhs = np.einsum("...ai,...a->...i", S, vec)
        if np.iscomplexobj(vec):
            return np.linalg.solve(StS.astype(complex), rhs[..., None])[..., 0]
        return np.linalg.solve(StS, rhs[..., None])[..., 0]

    def to_csv_rows(self, values: np.ndarray) -> list:
        """Rows ``(s1, s2, value_re, value_im)`` for a chart field."""
        s1, s2 = self.chart_coordinates()
        v = np.asarray(values, dtype=complex)
        return [(float(a), float(b), float(c.real), float(c.imag)) for a, b, c in zip(s1.ravel(), s2.ravel(), v.ravel())]

    def chart_coordinates(self):
        M1, M2 = self.shape
        if self.kind == "torus":
            t1 = 2 * np.pi * np.arange(M1) / M1
            t2 = 2 * np.pi * np.arange(M2) / M2
            return np.meshgrid(t1, t2, indexing="ij")
        return self.u[..., 0], self.u[..., 1]


def _liouville(d: PointData, S: np.ndarray) -> tuple:
    k = S.shape[0]
    N1, N2 = d.dA, d.dB
    mat = np.concatenate([S, N1[:, :, None], N2[:, :, None]], axis=2)
    num = pfaffian(d.omega) * np.linalg.det(mat)
    den = np.einsum("ka,ka->k", d.dA, N1) * np.einsum("ka,ka->k", d.dB, N2) - np.einsum("ka,ka->k", d.dA, N2) * np.einsum("ka,ka->k", d.dB, N1)
    lam = num / den
    om = np.einsum("ka,kab,kb->k", S[:, :, 0], d.omega, S[:, :, 1])
    return lam, om


def _finish(kind, shape, u, S, weights, manifold, symbol) -> ZeroSurface:
    M1, M2 = shape
    flat_u = u.reshape(-1, 4)
    flat_S = S.reshape(-1, 4, 2)
    d = point_data(manifold, symbol, flat_u)
    lam, om = _liouville(d, flat_S)
    return ZeroSurface(
        kind, shape, u, S, weights, lam.reshape(shape), d.bracket_AB.reshape(shape), om.reshape(shape), d
    )


def torus_seeds(M: int = 64, radii=(1.0, 1.0)) -> np.ndarray:
    t = 2 * np.pi * np.arange(M) / M
    T1, T2 = np.meshgrid(t, t, indexing="ij")
    r1, r2 = radii
    return np.stack([r1 * np.cos(T1), r2 * np.cos(T2), r1 * np.sin(T1), r2 * np.sin(T2)], axis=-1)


def extract_sigma(
    manifold: IRManifold,
    symbol: HolomorphicSymbol,
    seeds: np.ndarray | None = None,
    kind: str = "torus",
    weights: np.ndarray | None = None,
) -> ZeroSurface:
    """Project chart seeds ``(M1, M2, 4)`` onto the zero set and attach the Liouville data.

    ``kind="torus"``: seeds sampled on a uniform periodic angle grid (default:
    the unit torus, 64 x 64); tangents by spectral differentiation.
    ``kind="disc"``: any seed array; tangents span the kernel of
    ``(dA, dB)`` and ``weights`` default to zero (pointwise use only).
    """
    if manifold.n != 2:
        raise ValueError("zero surfaces are implemented for n = 2")
    if seeds is None:
        if kind != "torus":
            raise ValueError("disc charts need explicit seeds")
        seeds = torus_seeds()
    seeds = np.asarray(seeds, dtype=float)
    shape = seeds.shape[:2]
    u = newton_project(manifold, symbol, seeds.reshape(-1, 4)).reshape(seeds.shape)
    if kind == "torus":
        S = np.stack([spectral_derivative(u, 0), spectral_derivative(u, 1)], axis=-1)
        M1, M2 = shape
        w = np.full(shape, (2 * np.pi / M1) * (2 * np.pi / M2))
    elif kind == "disc":
        d = point_data(manifold, symbol, u.reshape(-1, 4))
        J = np.stack([d.dA, d.dB], axis=1)
        _, _, Vt = np.linalg.svd(J)
        S = np.transpose(Vt[:, 2:, :], (0, 2, 1)).reshape(shape + (4, 2))
        w = np.zeros(shape) if weights is None else np.asarray(weights, dtype=float)
    else:
        raise ValueError("kind must be 'torus' or 'disc'")
    return _finish(kind, shape, u, S, w, manifold, symbol)


def graph_disc_seeds(radius: float = 0.9, nr: int = 16, nphi: int = 32) -> np.ndarray:
    """Seeds on the graph ``xi1 = 0, xi2 = 1 - |x|^2`` over a polar grid of the disc."""
    r = radius * (np.arange(nr) + 0.5) / nr
    ph = 2 * np.pi * np.arange(nphi) / nphi
    Rr, Ph = np.meshgrid(r, ph, indexing="ij")
    x1, x2 = Rr * np.cos(Ph), Rr * np.sin(Ph)
    return np.stack([x1, x2, np.zeros_like(x1), 1 - x1**2 - x2**2], axis=-1)


# ----------------------------------------------------------------------------
# identities on the zero surface
# ----------------------------------------------------------------------------


@dataclass
class LiouvilleCheck:
    pointwise_residual: float
    integral: float | None
    scale: float


def liouville_check(surface: ZeroSurface) -> LiouvilleCheck:
    """``(i/2){p, conj p} lambda`` against the restriction of the symplectic form.

    Pointwise residual at chart nodes, relative to ``1 + max |omega(S1, S2)|``,
    plus the total over a closed chart (``None`` for a disc chart).
    """
    lhs = surface.bracket * surface.density
    rhs = surface.omega_tangent
    scale = 1.0 + float(np.max(np.abs(rhs)))
    res = float(np.max(np.abs(lhs - rhs))) / scale
    total = float(np.sum(lhs * surface.chart_weights)) if surface.kind == "torus" else None
    return LiouvilleCheck(res, total, scale)


def transport_coefficient(
    manifold: IRManifold, symbol: HolomorphicSymbol, surface: ZeroSurface, h: float = 1e-5
) -> tuple:
    """``a`` with ``{p, conj p} = conj(a) p - a conj(p)`` to first order at the zero set.

    Differentiates ``G = {p, conj p}`` along ``grad A`` and ``grad B`` and
    solves ``dG(N) = alpha dp(N) + beta d conj(p)(N)``; ``a = -beta``.
    Returns ``(a, alpha, G on the surface)``; ``alpha = conj(a)`` and
    ``G = 0`` hold when the manifold is critical.
    """
    d = surface.data
    u = surface.u.reshape(-1, 4)
    N = [d.dA / np.linalg.norm(d.dA, axis=1, keepdims=True), d.dB / np.linalg.norm(d.dB, axis=1, keepdims=True)]
    dG, dp = [], []
    for n_k in N:
        gp = -2j * point_data(manifold, symbol, u + h * n_k).bracket_AB
        gm = -2j * point_data(manifold, symbol, u - h * n_k).bracket_AB
        dG.append((gp - gm) / (2 * h))
        dp.append(np.einsum("ka,ka->k", d.dA + 1j * d.dB, n_k))
    dp = np.stack(dp, axis=1)
    mat = np.stack([dp, np.conj(dp)], axis=2)  # rows k, columns (alpha, beta)
    rhs = np.stack(dG, axis=1)
    sol = np.linalg.solve(mat, rhs[..., None])[..., 0]
    alpha, beta = sol[:, 0], sol[:, 1]
    G = -2j * d.bracket_AB
    return (-beta).reshape(surface.shape), alpha.reshape(surface.shape), G.reshape(surface.shape)


def hamilton_chart_fields(surface: ZeroSurface) -> tuple:
    """Chart components of ``H_{Re p}`` and ``H_{Im p}``."""
    d = surface.data
    XA = d.hamilton(d.dA).reshape(surface.shape + (4,))
    XB = d.hamilton(d.dB).reshape(surface.shape + (4,))
    return surface.chart_field(XA), surface.chart_field(XB)


def chart_divergence(surface: ZeroSurface, comps: np.ndarray) -> np.ndarray:
    """``d_k(lambda c^k) / lambda`` on a periodic chart."""
    lam = surface.density
    return (spectral_derivative(lam * comps[..., 0], 0) + spectral_derivative(lam * comps[..., 1], 1)) / lam


def lie_derivative_check(surface: ZeroSurface, a: np.ndarray) -> tuple:
    """Residuals of ``L_{H_Re p} lambda = Re(a) lambda`` and ``L_{H_Im p} lambda = Im(a) lambda``."""
    if surface.kind != "torus":
        raise ValueError("the Lie derivative check needs a closed periodic chart")
    cA, cB = hamilton_chart_fields(surface)
    ra = float(np.max(np.abs(chart_divergence(surface, cA) - a.real)))
    rb = float(np.max(np.abs(chart_divergence(surface, cB) - a.imag)))
    return ra, rb


# ----------------------------------------------------------------------------
# chart operators
# ----------------------------------------------------------------------------


@dataclass
class ChartOperators:
    """``H_p``, ``H_conj(p)`` and ``a`` on a periodic chart, applied spectrally."""

    hp: np.ndarray  # (M1, M2, 2) complex chart components of H_p
    a: np.ndarray  # (M1, M2) complex
    weights: np.ndarray  # Liouville measure per node

    @classmethod
    def from_surface(cls, surface: ZeroSurface, a: np.ndarray | None = None) -> "ChartOperators":
        if surface.kind != "torus":
            raise ValueError("chart operators need a closed periodic chart")
        cA, cB = hamilton_chart_fields(surface)
        a = np.zeros(surface.shape, dtype=complex) if a is None else np.asarray(a, dtype=complex)
        return cls(cA + 1j * cB, a, surface.measure)

    @property
    def shape(self) -> tuple:
        return self.a.shape

    def Hp(self, u: np.ndarray) -> np.ndarray:
        return self.hp[..., 0] * spectral_derivative(u, 0) + self.hp[..., 1] * spectral_derivative(u, 1)

    def Hpbar(self, u: np.ndarray) -> np.ndarray:
        return np.conj(self.hp[..., 0]) * spectral_derivative(u, 0) + np.conj(self.hp[..., 1]) * spectral_derivative(u, 1)

    def apply(self, u: np.ndarray) -> np.ndarray:
        """``-(H_p + a) H_conj(p) u``."""
        v = self.Hpbar(np.asarray(u, dtype=complex))
        return -(self.Hp(v) + self.a * v)

    def inner(self, u: np.ndarray, v: np.ndarray) -> complex:
        return complex(np.sum(u * np.conj(v) * self.weights))

    @property
    def constant_coefficients(self) -> bool:
        return bool(
            np.ptp(self.hp[..., 0].real) + np.ptp(self.hp[..., 0].imag) + np.ptp(self.hp[..., 1].real)
            + np.ptp(self.hp[..., 1].imag) + np.ptp(self.a.real) + np.ptp(self.a.imag) < 1e-9
        )

    def fourier_symbol(self) -> np.ndarray:
        """Multiplier of ``apply`` for constant coefficients."""
        M1, M2 = self.shape
        k1 = _wavenumbers(M1)[:, None]
        k2 = _wavenumbers(M2)[None, :]
        h1, h2 = self.hp[0, 0]
        a = self.a[0, 0]
        hp_sym = 1j * (h1 * k1 + h2 * k2)
        hpb_sym = 1j * (np.conj(h1) * k1 + np.conj(h2) * k2)
        return -(hp_sym + a) * hpb_sym


def random_trig_poly(shape: tuple, rng: np.random.Generator, degree: int = 4, real: bool = True) -> np.ndarray:
    M1, M2 = shape
    coefs = np.zeros(shape, dtype=complex)
    for k1 in range(-degree, degree + 1):
        for k2 in range(-degree, degree + 1):
            coefs[k1 % M1, k2 % M2] = rng.normal() + 1j * rng.normal()
    u = np.fft.ifft2(coefs) * M1 * M2
    return u.real if real else u


@dataclass
class OperatorChecks:
    imaginary_part: float
    constants_residual: float
    smallest_nonzero: float
    self_adjoint: float


def operator_checks(ops: ChartOperators, rng: np.random.Generator | None = None, degree: int = 6) -> OperatorChecks:
    """Reality, kernel and self-adjointness of the chart operator on trig polynomials."""
    rng = rng or np.random.default_rng(0)
    u = random_trig_poly(ops.shape, rng, degree, real=True)
    Lu = ops.apply(u)
    imag = float(np.max(np.abs(Lu.imag)) / max(1.0, np.max(np.abs(Lu))))
    const = float(np.max(np.abs(ops.apply(np.ones(ops.shape)))))
    if ops.constant_coefficients:
        sym = np.abs(ops.fourier_symbol())
        smallest = float(np.min(sym[sym > 1e-9])) if np.any(sym > 1e-9) else 0.0
    else:
        smallest = float("nan")
    v = random_trig_poly(ops.shape, rng, degree, real=False)
    w = random_trig_poly(ops.shape, rng, degree, real=False)
    lhs, rhs = ops.inner(ops.apply(v), w), ops.inner(v, ops.apply(w))
    sa = abs(lhs - rhs) / max(1.0, abs(lhs))
    return OperatorChecks(imag, const, smallest, float(sa))


@dataclass
class AdjointResiduals:
    mean_residual: float
    adjoint_residual: float


def adjoint_identity_check(ops: ChartOperators, u: np.ndarray, v: np.ndarray) -> AdjointResiduals:
    """``int (H_p + a) u lambda = 0`` and ``<(H_p + a) u, v> + <u, H_conj(p) v> = 0``."""
    Tu = ops.Hp(np.asarray(u, dtype=complex)) + ops.a * u
    r1 = abs(complex(np.sum(Tu * ops.weights)))
    r2 = abs(ops.inner(Tu, v) + ops.inner(u, ops.Hpbar(np.asarray(v, dtype=complex))))
    return AdjointResiduals(float(r1), float(r2))


@dataclass
class CorrectionSolution:
    delta_f: np.ndarray
    rhs: np.ndarray
    residual: float
    rhs_mean: float


def correction_rhs(
    manifold: IRManifold, surface: ZeroSurface, delta_p: Expr | HolomorphicSymbol, a: np.ndarray | None = None
) -> np.ndarray:
    """``Im((H_p + a) conj(delta_p))`` on the zero surface."""
    expr = delta_p.expr if isinstance(delta_p, HolomorphicSymbol) else _lift(delta_p)
    rho, T = manifold.map_points(surface.u.reshape(-1, 4))
    v, g, _ = expr.eval(rho, 1)
    dq = np.einsum("kj,kja->ka", g, T)  # d(delta_p) in base coordinates
    d = surface.data
    HA, HB = d.hamilton(d.dA), d.hamilton(d.dB)
    # conj(delta_p) has real differential conj(dq); H_p = H_A + i H_B
    Hp_conj = np.einsum("ka,ka->k", np.conj(dq), HA) + 1j * np.einsum("ka,ka->k", np.conj(dq), HB)
    a = np.zeros(surface.shape) if a is None else a
    return (Hp_conj + a.ravel() * np.conj(v)).imag.reshape(surface.shape)


def solve_correction(ops: ChartOperators, rhs: np.ndarray, mean_tol: float = 1e-9, tol: float = 1e-13) -> CorrectionSolution:
    """Zero-mean solution of ``-(H_p + a) H_conj(p) delta_f = rhs`` on the chart."""
    rhs = np.asarray(rhs)
    wsum = float(np.sum(ops.weights))
    mean = float(abs(np.sum(rhs * ops.weights)) / wsum)
    if mean > mean_tol * max(1.0, float(np.max(np.abs(rhs)))):
        raise SolvabilityError(mean)
    if ops.constant_coefficients:
        sym = ops.fourier_symbol()
        r_hat = np.fft.fft2(rhs)
        f_hat = np.where(np.abs(sym) > 1e-12, r_hat / np.where(np.abs(sym) > 1e-12, sym, 1.0), 0.0)
        f = np.fft.ifft2(f_hat)
    else:
        n = rhs.size

        def mv(x):
            x = x.reshape(ops.shape)
            y = ops.apply(x)
            return (y + np.sum(x * ops.weights) / wsum).ravel()

        A = LinearOperator((n, n), matvec=mv, dtype=complex)
        sol, info = gmres(A, rhs.ravel().astype(complex), rtol=tol, restart=200, maxiter=50)
        if info != 0:
            raise RuntimeError(f"GMRES did not converge (info={info})")
        f = sol.reshape(ops.shape)
        f = f - np.sum(f * ops.weights) / wsum
    if np.max(np.abs(f.imag)) < 1e-10 * max(1.0, np.max(np.abs(f))):
        f = f.real
    residual = float(np.max(np.abs(ops.apply(f) - rhs)))
    return CorrectionSolution(f, rhs, residual, mean)


def torus_extension(values: np.ndarray, tol: float = 1e-12) -> GeneratorFunction:
    """Polynomial in ``(x1, x2, xi1, xi2)`` that restricts to ``values`` on the unit torus chart.

    Uses ``exp(+-i theta_j) = x_j +- i xi_j`` on the torus; the resulting
    polynomial is real because ``values`` is real.
    """
    M1, M2 = values.shape
    c = np.fft.fft2(values) / (M1 * M2)
    terms: dict = {}

    def power(j, k):
        # (x_j + i sgn(k) xi_j)^{|k|} as {(a, b): coef} with a = power of x_j, b = power of xi_j
        s = 1j if k >= 0 else -1j
        m = abs(k)
        return {(m - b, b): math.comb(m, b) * s**b for b in range(m + 1)}

    k1s, k2s = _wavenumbers(M1).astype(int), _wavenumbers(M2).astype(int)
    for i1, k1 in enumerate(k1s):
        for i2, k2 in enumerate(k2s):
            ck = c[i1, i2]
            if abs(ck) < tol:
                continue
            for (a1, b1), c1 in power(0, k1).items():
                for (a2, b2), c2 in power(1, k2).items():
                    key = (a1, a2, b1, b2)
                    terms[key] = terms.get(key, 0.0) + ck * c1 * c2
    keys = [k for k, v in terms.items() if abs(v.real) > tol]
    if not keys:
        keys = [(0, 0, 0, 0)]
        terms = {keys[0]: 0.0}
    basis = tuple(BasisElement(tuple(int(e) for e in k), (0.0,) * 4, (0.0,) * 4) for k in keys)
    coefs = np.array([[terms[k].real for k in keys]])
    return GeneratorFunction(2, basis, coefs)


# ----------------------------------------------------------------------------
# experiments
# ----------------------------------------------------------------------------


def sigma_pairing(surface: ZeroSurface, f_values: np.ndarray) -> float:
    """``2 pi int_Sigma f (i/2){p, conj p} dlambda``: the first variation at a codimension-2 zero set."""
    return float(2 * np.pi * np.sum(f_values * surface.bracket * surface.measure))


@dataclass
class CorrectionExperiment:
    z_values: np.ndarray
    uncorrected: np.ndarray
    corrected: np.ndarray
    slope_uncorrected: float
    slope_corrected: float
    solve_residual: float
    delta_f: GeneratorFunction


def _slope(x, y) -> float:
    A = np.vstack([np.log(x), np.ones(len(x))]).T
    return float(np.linalg.lstsq(A, np.log(y), rcond=None)[0][0])


def correction_experiment(
    delta_p: Expr,
    z_values=(0.02, 0.04, 0.08),
    M: int = 64,
    dt: float = 0.01,
) -> CorrectionExperiment:
    """Bracket on the zero set of ``torus + z delta_p`` with and without the infinitesimal correction.

    The corrected manifold is the flow of real space along the polynomial
    extension of ``delta_f`` for time ``z``.
    """
    base_symbol = torus_codim2()
    real = IRManifold.real_space(2, 2.0, 3)
    surf = extract_sigma(real, base_symbol, torus_seeds(M))
    ops = ChartOperators.from_surface(surf)
    rhs = correction_rhs(real, surf, delta_p)
    sol = solve_correction(ops, rhs)
    ext = torus_extension(np.asarray(sol.delta_f).real)
    unc, cor = [], []
    for z in z_values:
        pz = perturbed(base_symbol, delta_p, z)
        s0 = extract_sigma(real, pz, surf.u)
        unc.append(float(np.max(np.abs(s0.bracket))))
        lam_z = flow(real, ext, z, min(dt, z))
        s1 = extract_sigma(lam_z, pz, surf.u)
        cor.append(float(np.max(np.abs(s1.bracket))))
    z = np.asarray(z_values, dtype=float)
    unc, cor = np.array(unc), np.array(cor)
    return CorrectionExperiment(z, unc, cor, _slope(z, unc), _slope(z, cor), sol.residual, ext)


@dataclass
class LeviForm:
    fixed: float
    corrected: float


def levi_form(surface: ZeroSurface, dz_p: np.ndarray, ops: ChartOperators | None = None) -> LeviForm:
    """``(pi/2) int |d_z p|^2 dlambda`` and the same with the image of ``H_p`` projected out.

    The projection is computed in Fourier space and needs constant chart
    coefficients and a constant Liouville density.
    """
    ops = ops or ChartOperators.from_surface(surface)
    w = surface.measure
    fixed = 0.5 * np.pi * float(np.sum(np.abs(dz_p) ** 2 * w))
    if not ops.constant_coefficients or np.ptp(w) > 1e-9 * np.max(w):
        raise ValueError("corrected mode needs constant chart coefficients and density")
    M1, M2 = surface.shape
    k1 = _wavenumbers(M1)[:, None]
    k2 = _wavenumbers(M2)[None, :]
    h1, h2 = ops.hp[0, 0]
    in_image = np.abs(h1 * k1 + h2 * k2) > 1e-12
    u_hat = np.fft.fft2(dz_p)
    rest = np.fft.ifft2(np.where(in_image, 0.0, u_hat))
    corrected = 0.5 * np.pi * float(np.sum(np.abs(rest) ** 2 * w))
    return LeviForm(fixed, corrected)
