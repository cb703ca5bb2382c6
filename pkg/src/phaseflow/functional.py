"""The regularized log-modulus functional and its epsilon -> 0 limit.

``I_eps(Lambda, p) = 1/2 * int log((|p|^2 + eps^2) / (1 + eps^2)) dmu`` is
integrated with the tensor trapezoid rule over the manifold grid, ``mu`` being
the symplectic volume.  The unregularized value ``I = int log|p| dmu`` is never
integrated directly; it is obtained by Richardson extrapolation along a
geometric ladder of ``eps``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .manifolds import IRManifold, volume_density
from .symbols import HolomorphicSymbol


class ExtrapolationError(RuntimeError):
    """The epsilon ladder does not behave like a convergent power series."""


class DecayError(ValueError):
    """The symbol does not tend to 1 on the boundary of the truncation box."""


@dataclass
class FunctionalValue:
    value: float
    epsilon: float
    tail_bound: float
    quad_error: float
    grid_shape: tuple
    R: float
    symbol: str = ""
    manifold_id: str = ""

    def row(self) -> dict:
        return {
            "symbol": self.symbol,
            "manifold_id": self.manifold_id,
            "epsilon": self.epsilon,
            "value": self.value,
            "tail_bound": self.tail_bound,
            "grid_shape": "x".join(str(s) for s in self.grid_shape),
            "R": self.R,
        }


@dataclass
class LimitValue:
    """Extrapolated ``I`` with its error budget."""

    value: float
    extrapolation_error: float
    quad_error: float
    tail_bound: float
    ladder: np.ndarray
    ladder_values: np.ndarray
    exponents: tuple
    table: np.ndarray = field(repr=False, default=None)

    @property
    def error(self) -> float:
        return self.extrapolation_error + self.quad_error + self.tail_bound


def default_ladder(eps0: float = 0.2, rungs: int = 6) -> np.ndarray:
    return eps0 * 0.5 ** np.arange(rungs)


def manifold_id(manifold: IRManifold) -> str:
    """Short deterministic label of a manifold's construction."""
    base = manifold.base_kind
    return f"{base}-n{manifold.n}-R{manifold.R:g}-g{'x'.join(map(str, manifold.grid_shape))}-h{len(manifold.history)}"


def _sphere_area(dim: int) -> float:
    return 2 * math.pi ** (dim / 2) / math.gamma(dim / 2)


def tail_bound(manifold: IRManifold, symbol: HolomorphicSymbol, samples: int = 4096) -> float:
    """Bound on the contribution of the region outside the truncation box.

    Samples ``|log|p||`` on the box faces and extends it with the declared
    decay order ``m``: ``sup * |S^{2n-1}| * R^{2n} / |m + 2n|``.
    """
    if not symbol.decays:
        raise DecayError(f"{symbol.name} does not tend to 1 at infinity; the functional is undefined")
    m = symbol.decay_order
    d = manifold.dim
    if m + d >= 0:
        raise DecayError(f"decay order {m} is too weak for dimension {d}")
    rng = np.random.default_rng(12345)
    u = rng.uniform(-manifold.R, manifold.R, size=(samples, d))
    face = rng.integers(0, d, size=samples)
    side = rng.choice([-1.0, 1.0], size=samples)
    u[np.arange(samples), face] = side * manifold.R
    rho, _ = manifold.map_points(u, frames=False)
    p = symbol.value(rho)
    sup = float(np.max(np.abs(np.log(np.abs(p)))))
    if not np.isfinite(sup) or sup > 0.5:
        raise DecayError(f"|log|p|| reaches {sup:.3g} on the box boundary; enlarge R")
    return sup * _sphere_area(d) * manifold.R**d / abs(m + d)


def _node_values(manifold: IRManifold, symbol: HolomorphicSymbol, chunk, check: bool = True):
    p = symbol.value(chunk.rho, check=check)
    w = chunk.base_weights * volume_density(chunk.frames)
    return p, w


def ladder_sums(manifold: IRManifold, symbol: HolomorphicSymbol, eps, backend=None, check: bool = True):
    """``I_eps`` for every ``eps`` in one pass, plus the every-other-node values."""
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    eps2 = eps**2
    fine = np.zeros(eps.shape[0])
    coarse = np.zeros(eps.shape[0])
    use_coarse = manifold.supports_coarse
    for c in manifold.chunks():
        p, w = _node_values(manifold, symbol, c, check)
        a2 = np.abs(p) ** 2
        fine += kernels.reg_log_sums(a2, w, eps2, backend=backend)
        if use_coarse:
            wc = manifold.coarse_mask(c.start, c.stop) * volume_density(c.frames)
            sel = wc > 0
            coarse += kernels.reg_log_sums(a2[sel], wc[sel], eps2, backend=backend)
    qerr = np.abs(fine - coarse) if use_coarse else np.full(eps.shape[0], np.nan)
    return fine, qerr


def compute_I_eps(manifold: IRManifold, symbol: HolomorphicSymbol, eps: float, backend=None) -> FunctionalValue:
    """Regularized functional ``I_eps`` with quadrature and tail estimates."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    tb = tail_bound(manifold, symbol)
    vals, qerr = ladder_sums(manifold, symbol, [eps], backend=backend)
    return FunctionalValue(float(vals[0]), float(eps), tb, float(qerr[0]), manifold.grid_shape, manifold.R, symbol.name, manifold_id(manifold))


def default_exponents(symbol: HolomorphicSymbol, count: int) -> tuple:
    """``k / m0`` for vanishing order ``m0``; even powers when the symbol is elliptic."""
    m0 = symbol.vanishing_order
    q = 2.0 if m0 == 0 else 1.0 / m0
    return tuple(q * (k + 1) for k in range(count))


def richardson(eps: np.ndarray, values: np.ndarray, exponents) -> np.ndarray:
    """Richardson table for a ladder with constant ratio.

    ``table[k, j]`` eliminates the first ``j`` exponents using rungs
    ``k-j..k``.  Works for any ladder ratio ``r = eps[k]/eps[k+1]``.
    """
    eps = np.asarray(eps, dtype=float)
    values = np.asarray(values, dtype=float)
    K = len(values)
    ratio = eps[0] / eps[1]
    if not np.allclose(eps[:-1] / eps[1:], ratio, rtol=1e-10):
        raise ValueError("Richardson extrapolation needs a geometric ladder")
    L = min(len(exponents), K - 1)
    table = np.full((K, L + 1), np.nan)
    table[:, 0] = values
    for j in range(1, L + 1):
        f = ratio ** exponents[j - 1]
        for k in range(j, K):
            table[k, j] = table[k, j - 1] + (table[k, j - 1] - table[k - 1, j - 1]) / (f - 1.0)
    return table


def check_monotone(values: np.ndarray) -> bool:
    """Ladder increments share one sign and shrink in magnitude."""
    d = np.diff(values)
    if np.all(np.abs(d) <= 1e-13 * max(1.0, float(np.max(np.abs(values))))):
        return True
    same_sign = np.all(d > 0) or np.all(d < 0)
    shrinking = np.all(np.abs(d[1:]) <= np.abs(d[:-1]) * (1 + 1e-9))
    return bool(same_sign and shrinking)


def extrapolate(eps, values, exponents, levels: int | None = None) -> tuple:
    """Limit value, error estimate and table for an ``eps`` ladder."""
    table = richardson(eps, values, exponents)
    L = table.shape[1] - 1 if levels is None else min(levels, table.shape[1] - 1)
    K = len(values)
    best = table[K - 1, L]
    err = abs(best - table[K - 1, L - 1]) if L >= 1 else abs(values[-1] - values[-2])
    if L >= 1 and K - 2 >= L:
        err = max(err, abs(best - table[K - 2, L]))
    return float(best), float(err), table


def compute_I(
    manifold: IRManifold,
    symbol: HolomorphicSymbol,
    ladder=None,
    exponents=None,
    levels: int | None = None,
    backend=None,
    require_monotone: bool = True,
) -> LimitValue:
    """Extrapolated ``I(Lambda, p)`` from the ``eps`` ladder.

    Default ladder ``0.2 * 2^-k``, ``k = 0..5``; default exponents ``k/m0``.
    Raises :class:`ExtrapolationError` if the ladder increments are not
    monotone.
    """
    eps = default_ladder() if ladder is None else np.asarray(ladder, dtype=float)
    if len(eps) < 3:
        raise ValueError("ladder needs at least 3 rungs")
    tb = tail_bound(manifold, symbol)
    vals, qerr = ladder_sums(manifold, symbol, eps, backend=backend)
    if require_monotone and not check_monotone(vals):
        raise ExtrapolationError(f"non-monotone ladder values {vals}")
    exps = tuple(exponents) if exponents is not None else default_exponents(symbol, len(eps) - 1)
    value, err, table = extrapolate(eps, vals, exps, levels)
    qe = float(np.nanmax(qerr)) if np.any(np.isfinite(qerr)) else float("nan")
    return LimitValue(value, err, qe, tb, eps, vals, exps, table)


def sublevel_volume(manifold: IRManifold, symbol: HolomorphicSymbol, delta) -> np.ndarray:
    """``mu{|p| <= delta}`` for each ``delta``."""
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    out = np.zeros(delta.shape[0])
    for c in manifold.chunks():
        p, w = _node_values(manifold, symbol, c)
        a = np.abs(p)
        for k, dl in enumerate(delta):
            out[k] += kernels.pairwise_sum(np.where(a <= dl, w, 0.0))
    return out


def loglog_slope(x, y) -> tuple:
    """Least-squares slope and intercept of ``log y`` against ``log x``."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    A = np.vstack([lx, np.ones_like(lx)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    return float(slope), float(intercept)


@dataclass
class RateFit:
    exponent: float
    prefactor: float
    errors: np.ndarray
    monotone: bool
    limit: float


def rate_fit(
    manifold: IRManifold,
    symbol: HolomorphicSymbol,
    ladder,
    limit: float | None = None,
    limit_ladder=None,
) -> RateFit:
    """Fit ``|I_eps - I| ~ C eps^q`` on ``ladder``.

    ``I`` is taken from ``limit`` when given, otherwise from
    :func:`compute_I` on ``limit_ladder`` (default: the standard ladder).
    """
    ladder = np.asarray(ladder, dtype=float)
    if limit is None:
        limit = compute_I(manifold, symbol, ladder=limit_ladder).value
    vals, _ = ladder_sums(manifold, symbol, ladder)
    err = np.abs(vals - limit)
    if np.any(err == 0):
        raise ExtrapolationError("I_eps equals the limit exactly; the rate is undefined")
    q, c = loglog_slope(ladder, err)
    order = np.argsort(ladder)
    mono = bool(np.all(np.diff(err[order]) > 0))
    return RateFit(q, math.exp(c), err, mono, float(limit))
