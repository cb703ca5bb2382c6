"""First and second variations of the functional under deformations.

On a manifold with base coordinates ``u`` and tangent frame ``T_a``, the
restricted form is ``omega_ab = Re sigma(T_a, T_b)``.  A function ``G`` on the
manifold has Hamilton field ``omega^{-1} grad G`` and the bracket is
``{G, K} = grad K . omega^{-1} grad G``.  These tangential quantities are
used for pairings; the ambient holomorphic bracket is used where the ambient
flow is differentiated directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, optimize

from . import kernels
from .functional import (
    ExtrapolationError,
    compute_I,
    compute_I_eps,
    default_ladder,
    extrapolate,
    ladder_sums,
    loglog_slope,
    tail_bound,
)
from .manifolds import (
    FlowError,
    GeneratorFunction,
    IRManifold,
    flow,
    frame_sigma,
    pfaffian,
    volume_density,
)
from .symbols import DomainError, HolomorphicSymbol, poisson_bracket_grads


class NotCriticalError(RuntimeError):
    """The manifold is not critical for the symbol, so the experiment does not apply."""


# ----------------------------------------------------------------------------
# per-chunk tangential calculus
# ----------------------------------------------------------------------------


@dataclass
class TangentialData:
    p: np.ndarray  # symbol values
    gp: np.ndarray  # ambient holomorphic gradient of p
    dP: np.ndarray  # d(p|Lambda)/du_a, complex
    omega_inv: np.ndarray  # inverse restricted form
    mu: np.ndarray  # symplectic quadrature weights

    def bracket(self, dG: np.ndarray, dK: np.ndarray) -> np.ndarray:
        """``{G, K}`` on the manifold from tangential gradients."""
        return np.einsum("ka,kab,kb->k", dK, self.omega_inv, dG)

    @property
    def half_i_bracket_p_pbar(self) -> np.ndarray:
        """``(i/2){p, conj p}``, real."""
        return (0.5j * self.bracket(self.dP, np.conj(self.dP))).real


def tangential_data(chunk, symbol: HolomorphicSymbol, check: bool = True) -> TangentialData:
    p, gp = symbol.value_grad(chunk.rho, check=check)
    dP = np.einsum("kj,kja->ka", gp, chunk.frames)
    omega = frame_sigma(chunk.frames).real
    mu = chunk.base_weights * np.abs(pfaffian(omega))
    return TangentialData(p, gp, dP, np.linalg.inv(omega), mu)


def restricted_generator(f: GeneratorFunction, chunk) -> tuple:
    """``F = Re f`` on the manifold and its tangential gradient."""
    v, g, _ = f.evaluate(chunk.rho, order=1)
    dF = np.einsum("kj,kja->ka", g, chunk.frames).real
    return v.real, dF, g


# ----------------------------------------------------------------------------
# first variation
# ----------------------------------------------------------------------------


def _generators(f) -> list:
    gens = [f] if isinstance(f, GeneratorFunction) else list(f)
    for g in gens:
        g.validate()
    return gens


def pairing_sums(
    manifold: IRManifold,
    symbol: HolomorphicSymbol,
    gens: Sequence[GeneratorFunction],
    eps,
    cutoff: float = 0.0,
    form: str = "bracket",
) -> dict:
    """One pass over the grid accumulating every pairing ingredient.

    Returns arrays indexed ``[generator, eps]`` for the regularized pairing
    (``"reg"``) and the inner part of the direct form (``"inner"``), and
    arrays indexed ``[generator]`` for the outer part of the direct form on
    the full grid and on the every-other-node subgrid (``"outer"``,
    ``"outer_coarse"``).
    """
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    G, E = len(gens), len(eps)
    reg = [[[] for _ in range(E)] for _ in range(G)]
    inner = [[[] for _ in range(E)] for _ in range(G)]
    outer = [[] for _ in range(G)]
    outer_c = [[] for _ in range(G)]
    coarse = manifold.supports_coarse
    for c in manifold.chunks():
        td = tangential_data(c, symbol)
        a2 = np.abs(td.p) ** 2
        far = np.sqrt(a2) > cutoff
        mu_c = manifold.coarse_mask(c.start, c.stop) * np.abs(pfaffian(frame_sigma(c.frames).real)) if coarse else None
        hb = td.half_i_bracket_p_pbar if form == "bracket" else None
        for k, g in enumerate(gens):
            F, dF, gf = restricted_generator(g, c)
            if form == "chain":
                nu_p = 1j * poisson_bracket_grads(gf, td.gp)
                num = (np.conj(td.p) * nu_p).real * td.mu
                for j, e in enumerate(eps):
                    reg[k][j].append(kernels.pairwise_sum(num / (a2 + e * e)))
            else:
                for j, e in enumerate(eps):
                    e2 = e * e
                    reg[k][j].append(kernels.pairwise_sum(F * 2.0 * e2 / (e2 + a2) ** 2 * hb * td.mu))
            HFp = td.bracket(dF.astype(complex), td.dP)
            num = -(np.conj(td.p) * HFp).imag
            with np.errstate(divide="ignore", invalid="ignore"):
                direct = np.where(far, num / a2, 0.0)
            outer[k].append(kernels.pairwise_sum(direct * td.mu))
            if coarse:
                outer_c[k].append(kernels.pairwise_sum(direct * mu_c))
            near_num = np.where(far, 0.0, num) * td.mu
            if np.any(~far):
                for j, e in enumerate(eps):
                    with np.errstate(divide="ignore", invalid="ignore"):
                        inner[k][j].append(kernels.pairwise_sum(np.where(far, 0.0, near_num / (a2 + e * e))))
    fs = lambda xs: math.fsum(xs) if xs else 0.0
    return {
        "reg": np.array([[fs(reg[k][j]) for j in range(E)] for k in range(G)]),
        "inner": np.array([[fs(inner[k][j]) for j in range(E)] for k in range(G)]),
        "outer": np.array([fs(outer[k]) for k in range(G)]),
        "outer_coarse": np.array([fs(outer_c[k]) for k in range(G)]) if coarse else np.full(G, np.nan),
    }


def gradient_pairing_eps(
    manifold: IRManifold,
    symbol: HolomorphicSymbol,
    f: GeneratorFunction | Sequence[GeneratorFunction],
    eps,
    form: str = "bracket",
):
    """Derivative of ``I_eps`` along the deformation generated by ``f``.

    ``form="bracket"``: ``2 int F eps^2/(eps^2+|p|^2)^2 (i/2){p, conj p} dmu``
    with ``F = Re f`` on the manifold.  ``form="chain"``: the ambient chain
    rule ``int Re(conj p * i{f, p}) / (|p|^2 + eps^2) dmu``.  The two agree
    up to quadrature error; the difference is an integration by parts.
    Scalar in, scalar out; lists of generators or of ``eps`` give arrays
    indexed ``[generator, eps]``.
    """
    if form not in ("bracket", "chain"):
        raise ValueError("form must be 'bracket' or 'chain'")
    gens = _generators(f)
    out = pairing_sums(manifold, symbol, gens, eps, cutoff=np.inf, form=form)["reg"]
    if isinstance(f, GeneratorFunction):
        out = out[0]
    if np.ndim(eps) == 0:
        out = out[..., 0]
    return float(out) if np.ndim(out) == 0 else out


def pairing_exponents(kind: str, vanishing_order: int, count: int) -> tuple:
    """Ladder exponents for pairings.

    ``"codim1"``: powers ``k/m0`` (zeros on a hypersurface of the manifold).
    ``"codim2"``: ``2, 2, 4, 4, ...`` which also removes ``eps^2 log eps``.
    """
    if kind == "codim1":
        q = 1.0 / max(1, vanishing_order)
        return tuple(q * (k + 1) for k in range(count))
    if kind == "codim2":
        return tuple(2.0 * (k // 2 + 1) for k in range(count))
    raise ValueError("kind must be 'codim1' or 'codim2'")


def zero_codimension(manifold: IRManifold, symbol: HolomorphicSymbol, deltas=(0.05, 0.1)) -> str:
    """Classify the zero set by the growth of ``sum w eps^2 / (|p|^2 + eps^2)`` in ``eps``.

    The smooth count grows like ``eps^(1/m0)`` on a hypersurface and like
    ``eps^2 log(1/eps)`` at isolated zeros; unlike a sharp sublevel count it
    is resolved on coarse grids.
    """
    deltas = np.asarray(deltas, dtype=float)
    counts = np.zeros(len(deltas))
    for c in manifold.chunks():
        p = symbol.value(c.rho)
        w = c.base_weights * volume_density(c.frames)
        a2 = np.abs(p) ** 2
        for k, d in enumerate(deltas):
            counts[k] += float(np.sum(w * d * d / (a2 + d * d)))
    slope, _ = loglog_slope(deltas, counts)
    # midway between the hypersurface rate 1/m0 and the isolated-zero rate 2
    threshold = 0.5 * (1.0 / max(1, symbol.vanishing_order) + 2.0)
    return "codim2" if slope > threshold else "codim1"


@dataclass
class PairingResult:
    value: float
    error: float
    method: str
    regularized_limit: float
    regularized_error: float
    direct: float
    direct_error: float
    gap: float
    ladder: np.ndarray
    ladder_values: np.ndarray
    exponents: tuple


def gradient_pairing(
    manifold: IRManifold,
    symbol: HolomorphicSymbol,
    f: GeneratorFunction | Sequence[GeneratorFunction],
    ladder=None,
    kind: str | None = None,
):
    """``eps -> 0`` limit of the first variation, computed two ways.

    (a) direct: ``-int <d arg p, H_F> dmu`` over ``|p| > c`` plus the
    extrapolated regularization of the region ``|p| <= c`` (``c`` is ten
    times the smallest ladder ``eps``); its error adds the extrapolation
    error of the inner part and the full-versus-subgrid difference.
    (b) regularized: Richardson limit of the regularized pairing.
    The reported value is the one with the smaller error estimate; ``gap``
    is their difference.
    """
    eps = default_ladder() if ladder is None else np.asarray(ladder, dtype=float)
    gens = _generators(f)
    kind = kind or zero_codimension(manifold, symbol)
    exps = pairing_exponents(kind, symbol.vanishing_order, len(eps) - 1)
    sums = pairing_sums(manifold, symbol, gens, eps, cutoff=10 * eps[-1])
    results = []
    for k in range(len(gens)):
        vals = sums["reg"][k]
        limit, err_b, _ = extrapolate(eps, vals, exps)
        inner, err_in, _ = extrapolate(eps, sums["inner"][k], exps)
        direct = sums["outer"][k] + inner
        qerr = abs(sums["outer"][k] - sums["outer_coarse"][k])
        err_a = err_in + (qerr if np.isfinite(qerr) else 0.0)
        use_direct = err_a < err_b
        results.append(PairingResult(
            direct if use_direct else limit,
            min(err_a, err_b),
            "direct" if use_direct else "regularized",
            limit, err_b, direct, err_a, abs(direct - limit), eps, vals, exps,
        ))
    return results[0] if isinstance(f, GeneratorFunction) else results


def gradient_eps_rate(manifold: IRManifold, symbol: HolomorphicSymbol, f: GeneratorFunction, ladder=None, limit: float | None = None) -> tuple:
    """Fitted exponent ``q`` in ``|pairing_eps - pairing| ~ eps^q`` and the errors."""
    eps = default_ladder() if ladder is None else np.asarray(ladder, dtype=float)
    if limit is None:
        limit = gradient_pairing(manifold, symbol, f, ladder=eps).value
    vals = np.array([gradient_pairing_eps(manifold, symbol, f, e) for e in eps])
    err = np.abs(vals - limit)
    q, _ = loglog_slope(eps, err)
    return q, err


# ----------------------------------------------------------------------------
# second variation
# ----------------------------------------------------------------------------


def hessian_autonomous(manifold: IRManifold, symbol: HolomorphicSymbol, f: GeneratorFunction, eps: float) -> float:
    """``d^2/dt^2 I_eps`` for the flow of a fixed generator.

    ``4 int F_{p pbar} |H_f p|^2 dmu`` with ``F_{p pbar} = eps^2 / (2 (eps^2 +
    |p|^2)^2)``, the mixed derivative of ``1/2 log(|p|^2 + eps^2)``.  Never
    negative.
    """
    f.validate()
    e2 = eps * eps
    parts = []
    for c in manifold.chunks():
        td = tangential_data(c, symbol)
        q = poisson_bracket_grads(f.grad(c.rho), td.gp)
        a2 = np.abs(td.p) ** 2
        parts.append(kernels.pairwise_sum(2.0 * e2 * np.abs(q) ** 2 / (e2 + a2) ** 2 * td.mu))
    return math.fsum(parts)


def hessian_nonautonomous(manifold: IRManifold, symbol: HolomorphicSymbol, family: GeneratorFunction, eps: float) -> float:
    """Second derivative at ``t = 0`` for the time-dependent family ``f_t``.

    The autonomous term of ``f_0`` plus the first variation along ``d f_t/dt``.
    """
    f0 = family.at_time(0.0)
    f1 = family.time_derivative()
    return hessian_autonomous(manifold, symbol, f0, eps) + gradient_pairing_eps(manifold, symbol, f1, eps, form="chain")


def second_difference(manifold: IRManifold, symbol: HolomorphicSymbol, family: GeneratorFunction, eps: float, h: float = 1e-2, dt: float | None = None) -> float:
    """Central second difference of ``t -> I_eps(Lambda_t)``."""
    dt = dt or h / 4
    plus = flow(manifold, family, h, dt)
    minus = flow(manifold, _reverse_family(family), h, dt)
    i0 = ladder_sums(manifold, symbol, [eps])[0][0]
    ip = ladder_sums(plus, symbol, [eps])[0][0]
    im = ladder_sums(minus, symbol, [eps])[0][0]
    return (ip - 2 * i0 + im) / (h * h)


def first_difference(manifold: IRManifold, symbol: HolomorphicSymbol, f: GeneratorFunction, eps: float, h: float = 1e-3, dt: float | None = None) -> float:
    """Central first difference of ``t -> I_eps(Lambda_t)``."""
    dt = dt or h
    ip = ladder_sums(flow(manifold, f, h, dt), symbol, [eps])[0][0]
    im = ladder_sums(flow(manifold, _reverse_family(f), h, dt), symbol, [eps])[0][0]
    return (ip - im) / (2 * h)


def _reverse_family(f: GeneratorFunction) -> GeneratorFunction:
    """Generator whose forward flow follows ``f_t`` backwards in time: ``-f_{-s}``."""
    coefs = f.coefficients.copy()
    signs = np.array([(-1.0) ** (j + 1) for j in range(coefs.shape[0])])
    return GeneratorFunction(f.n, f.basis, coefs * signs[:, None])


# ----------------------------------------------------------------------------
# descent
# ----------------------------------------------------------------------------


@dataclass
class DescentResult:
    status: str
    trajectory: list
    coefficients: np.ndarray
    manifold: IRManifold
    log: list = field(default_factory=list)
    accepted_pairs: list = field(default_factory=list)  # (eps, I before, I after) per accepted step

    LOG_COLUMNS = ("step", "epsilon", "I_eps", "grad_norm", "step_size", "accepted")


def _combine(basis: Sequence[GeneratorFunction], weights) -> GeneratorFunction:
    out = None
    for b, w in zip(basis, weights):
        term = b.scaled(float(w))
        out = term if out is None else out + term
    return out


def minimize(
    manifold: IRManifold,
    symbol: HolomorphicSymbol,
    basis: Sequence[GeneratorFunction],
    steps: int = 10,
    eps0: float = 0.1,
    eps_floor: float = 1e-3,
    step0: float = 1.0,
    dt: float = 0.05,
    grad_tol: float = 1e-6,
    max_backtracks: int = 20,
    armijo: float = 1e-4,
) -> DescentResult:
    """Gradient descent on ``I_eps`` over the span of ``basis``.

    The gradient components are the regularized pairings with each basis
    element; the step flows along ``-eta * sum g_k basis_k``.  ``eta`` is
    found by backtracking (Armijo condition at the current ``eps``), and
    ``eps`` is annealed in proportion to the gradient norm, never below
    ``eps_floor`` and never increasing.
    """
    basis = list(basis)
    coefs = np.zeros(len(basis))
    eps = eps0
    eta = step0
    norm0 = None
    current = manifold
    I_cur = ladder_sums(current, symbol, [eps])[0][0]
    traj = [float(I_cur)]
    log = []
    pairs = []
    status = "max_steps"
    for step in range(steps):
        g = np.asarray(gradient_pairing_eps(current, symbol, basis, eps), dtype=float)
        norm = float(np.linalg.norm(g))
        if norm0 is None:
            norm0 = norm
            if norm <= grad_tol:
                log.append((step, eps, float(I_cur), norm, 0.0, False))
                status = "critical"
                break
        elif norm <= grad_tol:
            status = "converged"
            break
        new_eps = max(eps_floor, min(eps, eps0 * norm / norm0))
        if new_eps != eps:
            eps = new_eps
            I_cur = ladder_sums(current, symbol, [eps])[0][0]
            g = np.asarray(gradient_pairing_eps(current, symbol, basis, eps), dtype=float)
            norm = float(np.linalg.norm(g))
        direction = _combine(basis, -g)
        accepted = False
        for _ in range(max_backtracks):
            try:
                trial = flow(current, direction, eta, min(dt, eta))
                I_new = ladder_sums(trial, symbol, [eps])[0][0]
            except (FlowError, DomainError):  # leaving the tube rejects the step
                I_new = np.inf
            ok = I_new <= I_cur - armijo * eta * norm * norm
            log.append((step, eps, float(I_new) if np.isfinite(I_new) else float("nan"), norm, eta, bool(ok)))
            if ok:
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            status = "line_search_failed"
            break
        coefs -= eta * g
        pairs.append((eps, float(I_cur), float(I_new)))
        current = trial
        I_cur = I_new
        traj.append(float(I_cur))
        eta *= 2.0
    return DescentResult(status, traj, coefs, current, log, pairs)


def write_descent_log(result: DescentResult, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DescentResult.LOG_COLUMNS)
        for row in result.log:
            w.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3]), repr(row[4]), int(row[5])])


# ----------------------------------------------------------------------------
# minimality to infinite order
# ----------------------------------------------------------------------------


@dataclass
class MinimalityReport:
    t_values: np.ndarray
    deviations: np.ndarray
    errors: np.ndarray
    worst: float
    within_error: bool
    power_constants: dict
    second_differences: np.ndarray
    gradient: float


def minimality_experiment(
    manifold: IRManifold,
    symbol: HolomorphicSymbol,
    f: GeneratorFunction,
    t_values,
    dt: float = 0.05,
    ladder=None,
    grad_tol: float = 1e-6,
) -> MinimalityReport:
    """``I(Lambda_t) - I(Lambda_0)`` along the flow of ``f``.

    Requires a critical starting manifold.  Reports the most negative
    deviation, whether every deviation is above minus its error budget, the
    smallest constants ``C_N`` with ``dev >= -C_N |t|^N`` for ``N = 2, 3, 4``
    and the second differences on the (uniform) ``t`` grid.
    """
    t_values = np.asarray(sorted(set(float(t) for t in t_values) | {0.0}))
    grad = gradient_pairing(manifold, symbol, f, ladder=ladder).value
    if abs(grad) > grad_tol:
        raise NotCriticalError(f"manifold is not critical: gradient pairing {grad:.3e}")
    base = compute_I(manifold, symbol, ladder=ladder, require_monotone=False)
    devs, errs = [], []
    for t in t_values:
        if t == 0.0:
            devs.append(0.0)
            errs.append(0.0)
            continue
        r = compute_I(flow(manifold, f, t, min(dt, abs(t))), symbol, ladder=ladder, require_monotone=False)
        devs.append(r.value - base.value)
        errs.append(r.error + base.error)
    devs = np.array(devs)
    errs = np.array(errs)
    nz = t_values != 0
    consts = {N: float(np.max(np.maximum(-devs[nz], 0.0) / np.abs(t_values[nz]) ** N, initial=0.0)) for N in (2, 3, 4)}
    steps = np.diff(t_values)
    if len(t_values) >= 3 and np.allclose(steps, steps[0]):
        sd = (devs[2:] - 2 * devs[1:-1] + devs[:-2]) / steps[0] ** 2
    else:
        sd = np.array([])
    return MinimalityReport(
        t_values, devs, errs, float(devs.min()), bool(np.all(devs >= -errs)), consts, sd, float(grad)
    )


# ----------------------------------------------------------------------------
# index formula for a model integral in the plane
# ----------------------------------------------------------------------------


@dataclass
class IndexResult:
    value: float
    error: float
    predicted: float
    zeros: list
    indices: list
    ladder: np.ndarray
    ladder_values: np.ndarray


def find_zeros_1d(r, L: float, samples: int = 4001, tol: float = 1e-10) -> list:
    """Zeros of a real function on ``[-L, L]``: sign changes and touching minima."""
    xs = np.linspace(-L, L, samples)
    ys = np.array([r(x) for x in xs])
    zeros = []
    for k in range(samples - 1):
        if ys[k] == 0.0:
            zeros.append(xs[k])
        elif ys[k] * ys[k + 1] < 0:
            zeros.append(optimize.brentq(r, xs[k], xs[k + 1], xtol=1e-14))
    a = np.abs(ys)
    for k in range(1, samples - 1):
        if a[k] <= a[k - 1] and a[k] <= a[k + 1] and ys[k - 1] * ys[k + 1] > 0:
            res = optimize.minimize_scalar(lambda x: abs(r(x)), bounds=(xs[k - 1], xs[k + 1]), method="bounded",
                                           options={"xatol": 1e-12})
            if abs(r(res.x)) < tol:
                zeros.append(float(res.x))
    zeros = sorted(zeros)
    out = []
    for z in zeros:
        if not out or abs(z - out[-1]) > 1e-6:
            out.append(float(z))
    if any(abs(abs(z) - L) < 1e-8 for z in out):
        raise ValueError("a zero lies on the truncation boundary")
    return out


def sign_change_index(r, x0: float, delta: float = 1e-4) -> int:
    """+1 where ``r`` goes from negative to positive, -1 for the reverse, 0 otherwise."""
    left, right = np.sign(r(x0 - delta)), np.sign(r(x0 + delta))
    if left < 0 < right:
        return 1
    if left > 0 > right:
        return -1
    return 0


def _gauss_legendre_theta(nodes: int):
    s, w = np.polynomial.legendre.leggauss(nodes)
    return 0.5 * np.pi * s, 0.5 * np.pi * w


def index_integral_eps(r, dr, f, eps: float, L: float, zeros=(), theta_nodes: int = 64) -> float:
    """``int int eps^2 / (eps^2 + xi^2 + r(x)^2)^2 r'(x) f(x, xi) dx dxi``.

    The ``xi`` integral is done after ``xi = A tan(theta)`` with
    ``A^2 = eps^2 + r^2``, which leaves a smooth integrand in ``theta``.
    """
    th, wt = _gauss_legendre_theta(theta_nodes)
    tan, cos2 = np.tan(th), np.cos(th) ** 2

    def integrand(x):
        A = math.sqrt(eps * eps + r(x) ** 2)
        inner = float(np.sum(wt * cos2 * f(x, A * tan)))
        return eps * eps * dr(x) * inner / A**3

    pts = [z for z in zeros if -L < z < L]
    val, _ = integrate.quad(integrand, -L, L, points=pts or None, limit=400, epsabs=1e-13, epsrel=1e-12)
    return val


def index_gradient_1d(
    r,
    dr,
    f,
    ladder=None,
    L: float = 6.0,
    exponents=None,
    zeros=None,
) -> IndexResult:
    """``eps -> 0`` limit of the model integral against ``pi * sum(index * f(zero, 0))``.

    ``r`` and ``dr`` are the profile and its derivative, ``f(x, xi)`` must
    accept an array of ``xi``.  Simple zeros give an expansion in ``eps^2``
    and ``eps^2 log eps``; zeros of higher order bring in powers of
    ``eps^(1/2)``, so the default exponents switch to ``1/2, 1, 3/2, ...``.
    """
    eps = default_ladder(0.1, 6) if ladder is None else np.asarray(ladder, dtype=float)
    zs = find_zeros_1d(r, L) if zeros is None else list(zeros)
    idx = [sign_change_index(r, z) for z in zs]
    vals = np.array([index_integral_eps(r, dr, f, e, L, zs) for e in eps])
    if exponents is not None:
        exps = tuple(exponents)
    elif all(abs(dr(z)) > 1e-8 for z in zs):
        exps = pairing_exponents("codim2", 1, len(eps) - 1)
    else:
        exps = tuple(0.5 * (k + 1) for k in range(len(eps) - 1))
    value, err, _ = extrapolate(eps, vals, exps)
    predicted = math.pi * sum(i * float(f(z, np.array([0.0]))[0]) for i, z in zip(idx, zs))
    return IndexResult(value, err, predicted, zs, idx, eps, vals)


# ----------------------------------------------------------------------------
# derivative jump at a real symbol
# ----------------------------------------------------------------------------


@dataclass
class JumpReport:
    left_slope: float
    right_slope: float
    jump: float
    predicted_jump: float
    sigma0: np.ndarray
    transversality: float
    t_values: np.ndarray
    deviations: np.ndarray


def _bracket_data(symbol: HolomorphicSymbol, f: GeneratorFunction, pts: np.ndarray):
    """``p``, ``H_p f`` and ``H_p^2 f`` at real points of the plane."""
    rho = pts.astype(complex)
    p, gp = symbol.value_grad(rho)
    hp = symbol.hessian(rho)
    _, gf, hf = f.evaluate(rho, order=2)
    px, pxi = gp[:, 0], gp[:, 1]
    fx, fxi = gf[:, 0], gf[:, 1]
    g = pxi * fx - px * fxi
    gx = hp[:, 1, 0] * fx + pxi * hf[:, 0, 0] - hp[:, 0, 0] * fxi - px * hf[:, 1, 0]
    gxi = hp[:, 1, 1] * fx + pxi * hf[:, 0, 1] - hp[:, 0, 1] * fxi - px * hf[:, 1, 1]
    h2 = pxi * gx - px * gxi
    return p.real, g.real, h2.real, np.stack([gx.real, gxi.real], axis=1), np.stack([px.real, pxi.real], axis=1)


def sigma0_points(symbol: HolomorphicSymbol, f: GeneratorFunction, R: float, samples: int = 201) -> np.ndarray:
    """Points of the real plane where ``p = 0`` and ``H_p f = 0``."""
    u = np.linspace(-R, R, samples)
    X, Y = np.meshgrid(u, u, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    p, g, *_ = _bracket_data(symbol, f, pts)
    scale = 4 * (u[1] - u[0])
    seeds = pts[(np.abs(p) < scale * np.abs(p).max() / 4 + scale) & (np.abs(g) < scale * (1 + np.abs(g).max()))]

    def F(v):
        pv, gv, *_ = _bracket_data(symbol, f, v[None, :])
        return [pv[0], gv[0]]

    found = []
    for s in seeds:
        sol = optimize.root(F, s, method="hybr", options={"xtol": 1e-13})
        if sol.success and np.max(np.abs(sol.fun)) < 1e-10 and np.all(np.abs(sol.x) < R):
            if not any(np.linalg.norm(sol.x - q) < 1e-6 for q in found):
                found.append(sol.x)
    return np.array(found).reshape(-1, 2)


def predicted_jump(symbol: HolomorphicSymbol, f: GeneratorFunction, R: float) -> tuple:
    """``2 * 2 pi sum f * sign(-H_p^2 f)`` over the points of ``Sigma_0`` in the plane.

    Returns the jump, the points and the transversality margin
    ``min |H_p^2 f| / |H_p|`` (the derivative of ``H_p f`` along the zero curve).
    """
    pts = sigma0_points(symbol, f, R)
    if len(pts) == 0:
        raise ValueError("no points with p = 0 and H_p f = 0; Sigma_0 extraction failed")
    _, _, h2, _, gp = _bracket_data(symbol, f, pts)
    fv = f.value(pts.astype(complex)).real
    margin = float(np.min(np.abs(h2) / np.linalg.norm(gp, axis=1)))
    total = 2.0 * math.pi * float(np.sum(fv * np.sign(-h2)))
    return 2.0 * total, pts, margin


def jump_experiment(
    manifold: IRManifold,
    symbol: HolomorphicSymbol,
    f: GeneratorFunction,
    t_values,
    dt: float = 0.05,
    ladder=None,
    transversality_tol: float = 1e-3,
) -> JumpReport:
    """One-sided slopes of ``t -> I(Lambda_t)`` at a real symbol on the real plane.

    Each side is fitted with ``a t + b t^2`` through the ``t = 0`` value.
    """
    if manifold.n != 1 or manifold.history or manifold.base_kind != "real":
        raise ValueError("jump_experiment needs the real plane as starting manifold")
    t_values = np.asarray(sorted(float(t) for t in t_values if t != 0))
    pred, pts, margin = (0.0, np.zeros((0, 2)), np.inf) if not np.any(f.coefficients) else predicted_jump(symbol, f, manifold.R)
    if margin < transversality_tol:
        raise ValueError(f"transversality fails: margin {margin:.3e}")
    base = compute_I(manifold, symbol, ladder=ladder).value
    devs = np.array([
        compute_I(flow(manifold, f, t, min(dt, abs(t))), symbol, ladder=ladder, require_monotone=False).value - base
        for t in t_values
    ])

    def slope(mask):
        t = t_values[mask]
        if len(t) == 0:
            return float("nan")
        A = np.stack([t, t * t], axis=1) if len(t) >= 2 else t[:, None]
        sol, *_ = np.linalg.lstsq(A, devs[mask], rcond=None)
        return float(sol[0])

    left, right = slope(t_values < 0), slope(t_values > 0)
    return JumpReport(left, right, right - left, pred, pts, margin, t_values, devs)
