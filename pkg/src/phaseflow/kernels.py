"""Hot loops with a numba implementation and a vectorized numpy twin.

Every public function takes ``backend=None`` (use the process default from
``PHASEFLOW_KERNELS``), ``"numba"`` or ``"numpy"``.  Both paths agree to
rounding; reductions use fixed block sizes so results do not depend on
thread scheduling.

Generator basis encoding (shared with :mod:`phaseflow.manifolds`): element
``k`` is ``prod_j rho_j**exps[k, j] * exp(-sum_j alphas[k, j] * (rho_j -
centers[k, j])**2)``.
"""

from __future__ import annotations

import numpy as np

from ._accel import njit, use_numba

_BLOCK = 256


# ----------------------------------------------------------------------------
# deterministic reductions
# ----------------------------------------------------------------------------


@njit
def _pairwise_nb(values):
    n = values.shape[0]
    nblocks = (n + _BLOCK - 1) // _BLOCK
    if nblocks == 0:
        return 0.0
    partial = np.zeros(nblocks)
    for b in range(nblocks):
        acc = 0.0
        for i in range(b * _BLOCK, min(n, (b + 1) * _BLOCK)):
            acc += values[i]
        partial[b] = acc
    m = nblocks
    while m > 1:
        half = (m + 1) // 2
        for i in range(m // 2):
            partial[i] = partial[2 * i] + partial[2 * i + 1]
        if m % 2 == 1:
            partial[half - 1] = partial[m - 1]
        m = half
    return partial[0]


def pairwise_sum(values, backend=None) -> float:
    """Deterministic pairwise sum of a real 1-D array."""
    values = np.ascontiguousarray(values, dtype=np.float64).ravel()
    if use_numba(backend):
        return float(_pairwise_nb(values))
    return float(np.sum(values))


# ----------------------------------------------------------------------------
# regularized log sums over an epsilon ladder
# ----------------------------------------------------------------------------


@njit
def _reg_log_sums_nb(absp2, weights, eps2):
    n = absp2.shape[0]
    m = eps2.shape[0]
    out = np.zeros(m)
    nblocks = (n + _BLOCK - 1) // _BLOCK
    partial = np.zeros((m, max(nblocks, 1)))
    for b in range(nblocks):
        for k in range(m):
            e2 = eps2[k]
            shift = np.log1p(e2)
            acc = 0.0
            for i in range(b * _BLOCK, min(n, (b + 1) * _BLOCK)):
                acc += weights[i] * 0.5 * (np.log(absp2[i] + e2) - shift)
            partial[k, b] = acc
    for k in range(m):
        out[k] = _pairwise_nb(partial[k, :nblocks])
    return out


def _reg_log_sums_np(absp2, weights, eps2):
    out = np.empty(eps2.shape[0])
    for k, e2 in enumerate(eps2):
        out[k] = np.sum(weights * 0.5 * (np.log(absp2 + e2) - np.log1p(e2)))
    return out


def reg_log_sums(absp2, weights, eps2, backend=None) -> np.ndarray:
    """``sum_i w_i * 0.5*log((|p_i|^2 + e^2)/(1 + e^2))`` for each ``e^2``.

    ``eps2`` may contain zero, giving the unregularized sum (``-inf`` if some
    ``|p_i|`` vanishes).
    """
    absp2 = np.ascontiguousarray(absp2, dtype=np.float64).ravel()
    weights = np.ascontiguousarray(weights, dtype=np.float64).ravel()
    eps2 = np.ascontiguousarray(np.atleast_1d(eps2), dtype=np.float64)
    if absp2.shape != weights.shape:
        raise ValueError("absp2 and weights must have the same length")
    with np.errstate(divide="ignore"):
        if use_numba(backend):
            return _reg_log_sums_nb(absp2, weights, eps2)
        return _reg_log_sums_np(absp2, weights, eps2)


# ----------------------------------------------------------------------------
# generator basis evaluation
# ----------------------------------------------------------------------------


@njit
def _ipow(z, e):
    out = 1.0 + 0.0j
    for _ in range(e):
        out *= z
    return out


@njit
def _eval_point_nb(rho, exps, alphas, centers, coefs, order, g, H):
    """Value, gradient and (order 2) Hessian of the generator at one point."""
    d = rho.shape[0]
    nbasis = exps.shape[0]
    value = 0.0 + 0.0j
    for a in range(d):
        g[a] = 0.0
        if order >= 2:
            for b in range(d):
                H[a, b] = 0.0
    p0 = np.empty(d, dtype=np.complex128)
    p1 = np.empty(d, dtype=np.complex128)
    p2 = np.empty(d, dtype=np.complex128)
    dP = np.empty(d, dtype=np.complex128)
    dE = np.empty(d, dtype=np.complex128)
    for k in range(nbasis):
        c = coefs[k]
        if c == 0:
            continue
        q = 0.0 + 0.0j
        for j in range(d):
            e = exps[k, j]
            z = rho[j]
            p0[j] = _ipow(z, e)
            p1[j] = 0.0
            p2[j] = 0.0
            if e >= 1:
                p1[j] = e * _ipow(z, e - 1)
            if e >= 2:
                p2[j] = e * (e - 1) * _ipow(z, e - 2)
            s = z - centers[k, j]
            q += alphas[k, j] * s * s
        E = np.exp(-q)
        P = 1.0 + 0.0j
        for j in range(d):
            P *= p0[j]
        for a in range(d):
            acc = p1[a]
            for j in range(d):
                if j != a:
                    acc *= p0[j]
            dP[a] = acc
            dE[a] = -2.0 * alphas[k, a] * (rho[a] - centers[k, a]) * E
        value += c * P * E
        for a in range(d):
            g[a] += c * (dP[a] * E + P * dE[a])
        if order >= 2:
            for a in range(d):
                for b in range(d):
                    if a == b:
                        d2P = p2[a]
                        for j in range(d):
                            if j != a:
                                d2P *= p0[j]
                    else:
                        d2P = p1[a] * p1[b]
                        for j in range(d):
                            if j != a and j != b:
                                d2P *= p0[j]
                    sa = rho[a] - centers[k, a]
                    sb = rho[b] - centers[k, b]
                    d2E = 4.0 * alphas[k, a] * alphas[k, b] * sa * sb * E
                    if a == b:
                        d2E -= 2.0 * alphas[k, a] * E
                    H[a, b] += c * (d2P * E + dP[a] * dE[b] + dP[b] * dE[a] + P * d2E)
    return value


@njit
def _generator_eval_nb(rho, exps, alphas, centers, coefs, order):
    n, d = rho.shape
    v = np.empty(n, dtype=np.complex128)
    g = np.empty((n, d), dtype=np.complex128)
    H = np.zeros((n, d, d), dtype=np.complex128)
    gt = np.empty(d, dtype=np.complex128)
    Ht = np.empty((d, d), dtype=np.complex128)
    for i in range(n):
        v[i] = _eval_point_nb(rho[i], exps, alphas, centers, coefs, order, gt, Ht)
        for a in range(d):
            g[i, a] = gt[a]
            if order >= 2:
                for b in range(d):
                    H[i, a, b] = Ht[a, b]
    return v, g, H


def _generator_eval_np(rho, exps, alphas, centers, coefs, order):
    n, d = rho.shape
    v = np.zeros(n, dtype=np.complex128)
    g = np.zeros((n, d), dtype=np.complex128)
    H = np.zeros((n, d, d), dtype=np.complex128)
    for k in range(exps.shape[0]):
        c = coefs[k]
        if c == 0:
            continue
        e = exps[k]
        s = rho - centers[k]
        E = np.exp(-np.sum(alphas[k] * s * s, axis=1))
        dE = -2.0 * alphas[k] * s * E[:, None]
        p0 = np.stack([rho[:, j] ** e[j] for j in range(d)], axis=1)
        p1 = np.stack(
            [e[j] * rho[:, j] ** (e[j] - 1) if e[j] >= 1 else np.zeros(n, complex) for j in range(d)],
            axis=1,
        )
        p2 = np.stack(
            [e[j] * (e[j] - 1) * rho[:, j] ** (e[j] - 2) if e[j] >= 2 else np.zeros(n, complex) for j in range(d)],
            axis=1,
        )
        P = np.prod(p0, axis=1)
        dP = np.empty((n, d), dtype=np.complex128)
        for a in range(d):
            others = [p0[:, j] for j in range(d) if j != a]
            dP[:, a] = p1[:, a] * (np.prod(others, axis=0) if others else 1.0)
        v += c * P * E
        g += c * (dP * E[:, None] + P[:, None] * dE)
        if order >= 2:
            for a in range(d):
                for b in range(d):
                    if a == b:
                        others = [p0[:, j] for j in range(d) if j != a]
                        d2P = p2[:, a] * (np.prod(others, axis=0) if others else 1.0)
                    else:
                        others = [p0[:, j] for j in range(d) if j not in (a, b)]
                        d2P = p1[:, a] * p1[:, b] * (np.prod(others, axis=0) if others else 1.0)
                    d2E = 4.0 * alphas[k, a] * alphas[k, b] * s[:, a] * s[:, b] * E
                    if a == b:
                        d2E = d2E - 2.0 * alphas[k, a] * E
                    H[:, a, b] += c * (d2P * E + dP[:, a] * dE[:, b] + dP[:, b] * dE[:, a] + P * d2E)
    return v, g, H


def _prep_basis(exps, alphas, centers, coefs):
    return (
        np.ascontiguousarray(exps, dtype=np.int64),
        np.ascontiguousarray(alphas, dtype=np.float64),
        np.ascontiguousarray(centers, dtype=np.float64),
        np.ascontiguousarray(coefs, dtype=np.complex128),
    )


def generator_eval(rho, exps, alphas, centers, coefs, order=1, backend=None):
    """Evaluate a basis expansion at complex points ``rho`` of shape (N, d).

    Returns ``(value, gradient, hessian)``; the Hessian is zero unless
    ``order >= 2``.
    """
    rho = np.ascontiguousarray(np.atleast_2d(rho), dtype=np.complex128)
    exps, alphas, centers, coefs = _prep_basis(exps, alphas, centers, coefs)
    if use_numba(backend):
        return _generator_eval_nb(rho, exps, alphas, centers, coefs, order)
    return _generator_eval_np(rho, exps, alphas, centers, coefs, order)


# ----------------------------------------------------------------------------
# RK4 flow of the deformation field i*H_f with tangent-frame transport
# ----------------------------------------------------------------------------
#
# For a point rho = (x, xi) the field is  x' = i df/dxi,  xi' = -i df/dx,
# i.e. nu = i J grad f with J = [[0, I], [-I, 0]].  Frames obey T' = i J Hess f T.


@njit
def _coefs_at(coef_poly, t):
    deg1, nbasis = coef_poly.shape
    out = np.zeros(nbasis, dtype=np.complex128)
    for j in range(deg1 - 1, -1, -1):
        for k in range(nbasis):
            out[k] = out[k] * t + coef_poly[j, k]
    return out


@njit
def _field_nb(rho, T, exps, alphas, centers, coefs, with_frames, g, H, drho, dT):
    d = rho.shape[0]
    n = d // 2
    _eval_point_nb(rho, exps, alphas, centers, coefs, 2 if with_frames else 1, g, H)
    for j in range(n):
        drho[j] = 1j * g[n + j]
        drho[n + j] = -1j * g[j]
    if with_frames:
        m = T.shape[1]
        for a in range(m):
            for j in range(n):
                acc_x = 0.0 + 0.0j
                acc_xi = 0.0 + 0.0j
                for l in range(d):
                    acc_x += H[n + j, l] * T[l, a]
                    acc_xi += H[j, l] * T[l, a]
                dT[j, a] = 1j * acc_x
                dT[n + j, a] = -1j * acc_xi


@njit
def _rk4_nb(rho, frames, exps, alphas, centers, coef_poly, t0, t1, nsteps, with_frames):
    npts, d = rho.shape
    m = frames.shape[2]
    out_rho = rho.copy()
    out_T = frames.copy()
    dt = (t1 - t0) / nsteps
    g = np.empty(d, dtype=np.complex128)
    H = np.empty((d, d), dtype=np.complex128)
    k1 = np.empty(d, dtype=np.complex128)
    k2 = np.empty(d, dtype=np.complex128)
    k3 = np.empty(d, dtype=np.complex128)
    k4 = np.empty(d, dtype=np.complex128)
    K1 = np.zeros((d, m), dtype=np.complex128)
    K2 = np.zeros((d, m), dtype=np.complex128)
    K3 = np.zeros((d, m), dtype=np.complex128)
    K4 = np.zeros((d, m), dtype=np.complex128)
    y = np.empty(d, dtype=np.complex128)
    Y = np.empty((d, m), dtype=np.complex128)
    for s in range(nsteps):
        t = t0 + s * dt
        ca = _coefs_at(coef_poly, t)
        cb = _coefs_at(coef_poly, t + 0.5 * dt)
        cc = _coefs_at(coef_poly, t + dt)
        for i in range(npts):
            r = out_rho[i]
            T = out_T[i]
            _field_nb(r, T, exps, alphas, centers, ca, with_frames, g, H, k1, K1)
            for a in range(d):
                y[a] = r[a] + 0.5 * dt * k1[a]
                for b in range(m):
                    Y[a, b] = T[a, b] + 0.5 * dt * K1[a, b]
            _field_nb(y, Y, exps, alphas, centers, cb, with_frames, g, H, k2, K2)
            for a in range(d):
                y[a] = r[a] + 0.5 * dt * k2[a]
                for b in range(m):
                    Y[a, b] = T[a, b] + 0.5 * dt * K2[a, b]
            _field_nb(y, Y, exps, alphas, centers, cb, with_frames, g, H, k3, K3)
            for a in range(d):
                y[a] = r[a] + dt * k3[a]
                for b in range(m):
                    Y[a, b] = T[a, b] + dt * K3[a, b]
            _field_nb(y, Y, exps, alphas, centers, cc, with_frames, g, H, k4, K4)
            for a in range(d):
                r[a] += dt / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a])
                if with_frames:
                    for b in range(m):
                        T[a, b] += dt / 6.0 * (K1[a, b] + 2.0 * K2[a, b] + 2.0 * K3[a, b] + K4[a, b])
    return out_rho, out_T


def _coefs_at_np(coef_poly, t):
    out = np.zeros(coef_poly.shape[1], dtype=np.complex128)
    for j in range(coef_poly.shape[0] - 1, -1, -1):
        out = out * t + coef_poly[j]
    return out


def _field_np(rho, T, exps, alphas, centers, coefs, with_frames):
    n = rho.shape[1] // 2
    _, g, H = _generator_eval_np(rho, exps, alphas, centers, coefs, 2 if with_frames else 1)
    drho = np.concatenate([1j * g[:, n:], -1j * g[:, :n]], axis=1)
    if not with_frames:
        return drho, None
    JH = np.concatenate([1j * H[:, n:, :], -1j * H[:, :n, :]], axis=1)
    return drho, JH @ T


def _rk4_np(rho, frames, exps, alphas, centers, coef_poly, t0, t1, nsteps, with_frames):
    r = rho.copy()
    T = frames.copy()
    dt = (t1 - t0) / nsteps
    for s in range(nsteps):
        t = t0 + s * dt
        ca = _coefs_at_np(coef_poly, t)
        cb = _coefs_at_np(coef_poly, t + 0.5 * dt)
        cc = _coefs_at_np(coef_poly, t + dt)
        k1, K1 = _field_np(r, T, exps, alphas, centers, ca, with_frames)
        k2, K2 = _field_np(r + 0.5 * dt * k1, T + 0.5 * dt * K1 if with_frames else T, exps, alphas, centers, cb, with_frames)
        k3, K3 = _field_np(r + 0.5 * dt * k2, T + 0.5 * dt * K2 if with_frames else T, exps, alphas, centers, cb, with_frames)
        k4, K4 = _field_np(r + dt * k3, T + dt * K3 if with_frames else T, exps, alphas, centers, cc, with_frames)
        r = r + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if with_frames:
            T = T + dt / 6.0 * (K1 + 2 * K2 + 2 * K3 + K4)
    return r, T


def rk4_flow(rho, frames, exps, alphas, centers, coef_poly, t0, t1, nsteps, with_frames=True, backend=None):
    """Integrate the deformation field from ``t0`` to ``t1`` in ``nsteps`` RK4 steps.

    ``coef_poly`` has shape (deg+1, K): coefficient ``k`` at time ``t`` is
    ``sum_j coef_poly[j, k] * t**j``.  ``frames`` has shape (N, d, m) and is
    transported by the linearized field when ``with_frames`` is true.
    """
    rho = np.ascontiguousarray(np.atleast_2d(rho), dtype=np.complex128)
    frames = np.ascontiguousarray(frames, dtype=np.complex128)
    exps, alphas, centers, _ = _prep_basis(exps, alphas, centers, np.zeros(len(exps)))
    coef_poly = np.ascontiguousarray(np.atleast_2d(coef_poly), dtype=np.complex128)
    if nsteps < 1:
        raise ValueError("nsteps must be >= 1")
    if use_numba(backend):
        return _rk4_nb(rho, frames, exps, alphas, centers, coef_poly, float(t0), float(t1), int(nsteps), bool(with_frames))
    return _rk4_np(rho, frames, exps, alphas, centers, coef_poly, float(t0), float(t1), int(nsteps), bool(with_frames))
