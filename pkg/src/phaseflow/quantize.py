"""One-dimensional h-Weyl quantization as Nystrom matrices.

``Op(a) u(x) = (2 pi h)^{-1} int int exp(i (x - y) theta / h) a((x + y)/2, theta) u(y) dy dtheta``

is discretized on the midpoint grid ``x_j = -L + (j + 1/2) 2L/N`` as
``I + K dx`` with ``K`` the kernel of ``Op(p - 1)``.  For symbols that are
sums of shifted Gaussians the ``theta`` integral is done in closed form;
otherwise a trapezoid rule in ``theta`` is used, evaluated with one matrix
product per anti-diagonal of the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import kernels
from .functional import compute_I, default_ladder, extrapolate
from .manifolds import IRManifold, volume_density, x_only
from .symbols import HolomorphicSymbol


class ResolutionError(ValueError):
    """The grid cannot resolve the oscillation of the kernel."""

    def __init__(self, message: str, suggested_N: int):
        super().__init__(f"{message}; try N >= {suggested_N}")
        self.suggested_N = suggested_N


@dataclass
class QuantizedOperator:
    h: float
    L: float
    N: int
    x: np.ndarray
    matrix: np.ndarray
    symbol_id: str
    theta_truncation: float
    closed_form: bool

    @property
    def dx(self) -> float:
        return 2 * self.L / self.N

    def trace_K(self) -> complex:
        """``tr(K dx)``, the discrete trace of ``Op(p - 1)``."""
        return complex(np.trace(self.matrix) - self.N)

    @property
    def metadata(self) -> dict:
        return {"L": self.L, "N": self.N, "theta_truncation": self.theta_truncation, "closed_form": self.closed_form}


def midpoint_grid(L: float, N: int) -> np.ndarray:
    return -L + (np.arange(N) + 0.5) * (2 * L / N)


def truncation_energy(symbol: HolomorphicSymbol, L: float, tol: float = 1e-4, theta_max: float = 40.0) -> float:
    """Largest ``|theta|`` where ``|p - 1|`` exceeds ``tol`` times its maximum over ``|x| <= L``."""
    xs = np.linspace(-L, L, 129)
    ths = np.linspace(-theta_max, theta_max, 4001)
    X, T = np.meshgrid(xs, ths, indexing="ij")
    a = np.abs(symbol.value(np.stack([X.ravel(), T.ravel()], axis=1).astype(complex)) - 1.0).reshape(X.shape)
    amax = a.max()
    if amax == 0:
        return 0.0
    rows = np.max(a, axis=0) > tol * amax
    return float(np.max(np.abs(ths[rows])))


def _check_resolution(h: float, L: float, N: int, energy: float, nodes_per_wavelength: float = 8.0) -> None:
    if energy <= 0:
        return
    wavelength = 2 * np.pi * h / energy
    dx = 2 * L / N
    if wavelength / dx < nodes_per_wavelength:
        need = int(math.ceil(nodes_per_wavelength * 2 * L / wavelength))
        need += need % 2
        raise ResolutionError(
            f"{wavelength / dx:.2f} nodes per wavelength at theta = {energy:.3g} (need {nodes_per_wavelength:g})", need
        )


def _gauss_kernel(terms, x: np.ndarray, h: float) -> np.ndarray:
    m = 0.5 * (x[:, None] + x[None, :])
    u = x[:, None] - x[None, :]
    K = np.zeros(m.shape, dtype=complex)
    for c, alpha, b in terms:
        K += c * np.exp(-alpha * m * m) * math.sqrt(math.pi / alpha) * np.exp(-u * b / h - u * u / (4 * alpha * h * h))
    return K / (2 * math.pi * h)


def _trapezoid_kernel(symbol: HolomorphicSymbol, x: np.ndarray, h: float, theta_max: float, nodes: int) -> np.ndarray:
    N = len(x)
    dx = x[1] - x[0]
    theta = np.linspace(-theta_max, theta_max, nodes)
    wt = np.full(nodes, theta[1] - theta[0])
    wt[[0, -1]] *= 0.5
    # anti-diagonal s = j + k has midpoint m_s, diagonal d = j - k has offset u_d
    s = np.arange(2 * N - 1)
    m = x[0] + 0.5 * s * dx
    d = np.arange(-(N - 1), N)
    u = d * dx
    M_, T_ = np.meshgrid(m, theta, indexing="ij")
    a = (symbol.value(np.stack([M_.ravel(), T_.ravel()], axis=1).astype(complex)) - 1.0).reshape(M_.shape)
    E = np.exp(1j * np.outer(theta, u) / h) * wt[:, None]
    F = a @ E  # (2N-1, 2N-1): F[s, d]
    j = np.arange(N)[:, None]
    k = np.arange(N)[None, :]
    return F[j + k, (j - k) + (N - 1)] / (2 * math.pi * h)


def weyl_matrix(
    symbol: HolomorphicSymbol,
    h: float,
    L: float = 6.0,
    N: int = 512,
    theta_nodes: int = 4096,
    energy_tol: float = 1e-4,
    force_quadrature: bool = False,
) -> QuantizedOperator:
    """Nystrom matrix ``I + K dx`` of the h-Weyl quantization of ``symbol``."""
    if symbol.n != 1:
        raise ValueError("quantization is implemented for n = 1")
    if not 0 < h <= 1:
        raise ValueError("h must lie in (0, 1]")
    if N % 2:
        raise ValueError("N must be even")
    if not symbol.decays or symbol.decay_order >= -2:
        raise ValueError(f"{symbol.name} does not decay fast enough to be trace class")
    x = midpoint_grid(L, N)
    energy = truncation_energy(symbol, L, energy_tol)
    _check_resolution(h, L, N, energy)
    closed = symbol.gauss_terms is not None and not force_quadrature
    if closed:
        K = _gauss_kernel(symbol.gauss_terms, x, h)
        theta_max = float("inf")
    else:
        theta_max = truncation_energy(symbol, L, 1e-15)
        K = _trapezoid_kernel(symbol, x, h, theta_max, theta_nodes)
    A = np.eye(N, dtype=complex) + K * (2 * L / N)
    return QuantizedOperator(h, L, N, x, A, symbol.name, theta_max, closed)


@dataclass
class LogDet:
    value: float
    singular: bool


def log_abs_det(op: QuantizedOperator | np.ndarray) -> LogDet:
    """``log |det|`` from an LU factorization with partial pivoting."""
    A = op.matrix if isinstance(op, QuantizedOperator) else np.asarray(op)
    lu, _ = scipy.linalg.lu_factor(A, check_finite=True)
    diag = np.abs(np.diag(lu))
    if np.any(diag == 0):
        return LogDet(-math.inf, True)
    return LogDet(float(np.sum(np.log(diag))), False)


def n_rule(h: float, L: float = 6.0, c: float = 1.4, minimum: int = 512) -> int:
    """Power of two at least ``c L^2 / h``."""
    target = max(minimum, int(math.ceil(c * L * L / h)))
    return 1 << int(math.ceil(math.log2(target)))


# ----------------------------------------------------------------------------
# experiments
# ----------------------------------------------------------------------------


def fit_power(h, err) -> tuple:
    """Slope and prefactor of ``log err`` against ``log h``."""
    A = np.vstack([np.log(h), np.ones(len(h))]).T
    (slope, c), *_ = np.linalg.lstsq(A, np.log(err), rcond=None)
    return float(slope), float(math.exp(c))


@dataclass
class EllipticCompare:
    rows: list  # (h, N, log|det|, 2 pi h log|det|, E)
    target: float
    slope: float
    passed: bool

    COLUMNS = ("h", "N", "log_abs_det", "scaled", "error")


def elliptic_logdet_compare(
    symbol: HolomorphicSymbol,
    h_ladder,
    target: float | None = None,
    L: float = 6.0,
    N_rule=n_rule,
    manifold: IRManifold | None = None,
) -> EllipticCompare:
    """``E(h) = |2 pi h log|det Op(p)| - int log|p| dx dxi|`` along ``h_ladder``."""
    if symbol.vanishing_order != 0:
        raise ValueError("the elliptic comparison needs a symbol without zeros on real space")
    if target is None:
        manifold = manifold or IRManifold.real_space(1, 6.0, 401)
        target = compute_I(manifold, symbol).value
    rows = []
    for h in h_ladder:
        N = N_rule(h, L)
        ld = log_abs_det(weyl_matrix(symbol, h, L, N)).value
        scaled = 2 * math.pi * h * ld
        rows.append((float(h), N, ld, scaled, abs(scaled - target)))
    hs = np.array([r[0] for r in rows])
    es = np.array([r[4] for r in rows])
    if np.all(es > 0) and len(hs) >= 2:
        slope, _ = fit_power(hs, es)
    else:
        slope = float("inf")
    return EllipticCompare(rows, float(target), slope, bool(slope >= 0.8))


@dataclass
class Slack:
    a: float
    b: float

    def __call__(self, h: float) -> float:
        return self.a + self.b * h


def calibrate_slack(family, h_ladder, L: float = 6.0, N_rule=n_rule) -> Slack:
    """Upper envelope ``a + b h`` of the elliptic-family errors ``E(h)``."""
    hs, es = [], []
    for sym in family:
        res = elliptic_logdet_compare(sym, h_ladder, L=L, N_rule=N_rule)
        for r in res.rows:
            hs.append(r[0])
            es.append(r[4])
    hs, es = np.array(hs), np.array(es)
    A = np.vstack([np.ones_like(hs), hs]).T
    (a, b), *_ = np.linalg.lstsq(A, es, rcond=None)
    b = max(0.0, float(b))
    a = float(np.max(es - b * hs))
    return Slack(max(0.0, a), b)


def bump_weights(s_values, alpha: float = 1.0) -> list:
    """``phi_s(x) = s exp(-alpha x^2)``."""
    return [x_only(1, alpha=alpha, coef=float(s)) for s in s_values]


@dataclass
class BoundExperiment:
    rows: list  # (h, phi_index, s_or_id, scaled_logdet, I_phi, slack, satisfied)
    best_phi: int
    skipped: list = field(default_factory=list)

    COLUMNS = ("h", "phi_id", "scaled_log_abs_det", "I_phi", "slack", "bound_satisfied")

    @property
    def all_satisfied(self) -> bool:
        return all(r[-1] for r in self.rows)


def bound_experiment(
    symbol: HolomorphicSymbol,
    weights: list,
    h_ladder,
    slack: Slack,
    L: float = 6.0,
    N_rule=n_rule,
    R: float = 4.5,
    nodes: int = 601,
    ladder=None,
) -> BoundExperiment:
    """``2 pi h log|det Op(p)| <= I(Lambda_phi, p) + slack(h)`` for each weight ``phi``."""
    I_vals = []
    skipped = []
    for k, phi in enumerate(weights):
        m = IRManifold.weight_graph(phi, R, nodes)
        try:
            I_vals.append(compute_I(m, symbol, ladder=ladder, require_monotone=False).value)
        except ValueError as exc:
            skipped.append((k, str(exc)))
            I_vals.append(None)
    rows = []
    for h in h_ladder:
        ld = log_abs_det(weyl_matrix(symbol, h, L, N_rule(h, L))).value
        scaled = 2 * math.pi * h * ld
        for k, I_phi in enumerate(I_vals):
            if I_phi is None:
                continue
            rows.append((float(h), k, scaled, I_phi, slack(h), bool(scaled <= I_phi + slack(h))))
    valid = [(v, k) for k, v in enumerate(I_vals) if v is not None]
    best = min(valid)[1] if valid else -1
    return BoundExperiment(rows, best, skipped)


# ----------------------------------------------------------------------------
# spectral parameter
# ----------------------------------------------------------------------------


@dataclass
class SpectralMap:
    z_re: np.ndarray
    z_im: np.ndarray
    I_values: np.ndarray  # (len(z_re), len(z_im))
    I_errors: np.ndarray
    laplacian: np.ndarray  # discrete d_z d_zbar I at interior nodes (NaN on the border)
    pushforward: np.ndarray  # mu{p in cell} per z-grid cell
    dz: float
    flags: np.ndarray  # reference too close to z
    real_symbol: bool
    ladder: np.ndarray

    def off_axis_fraction(self) -> float:
        """Share of ``sum |dd I|`` outside the two rows adjacent to the real axis."""
        lap = np.nan_to_num(self.laplacian)
        near = np.abs(self.z_im) < self.dz
        total = np.abs(lap).sum()
        return float(np.abs(lap[:, ~near]).sum() / total) if total else 0.0

    def weyl_count(self, e1: float, e2: float) -> tuple:
        """``(sum of dd I over the strip Re z in [e1, e2], mu{e1 <= p < e2})`` for a real symbol."""
        sel = (self.z_re >= e1) & (self.z_re <= e2)
        lap = float(np.nansum(self.laplacian[sel]) * self.dz**2)
        return lap, float(np.sum(self.pushforward[sel]))

    def rect_masses(self, re_range, im_range) -> tuple:
        """``(sum dd I * dz^2, nu(rect))`` over the interior cells inside the rectangle."""
        sel = (
            (self.z_re[:, None] >= re_range[0]) & (self.z_re[:, None] <= re_range[1])
            & (self.z_im[None, :] >= im_range[0]) & (self.z_im[None, :] <= im_range[1])
            & np.isfinite(self.laplacian)
        )
        lap = float(np.sum(self.laplacian[sel]) * self.dz**2)
        nu = float(np.sum(self.pushforward[sel]))
        return lap, nu


def z_grid(re_range, im_range, count: int, offset_imag: bool = True) -> tuple:
    """Uniform square-cell grid; with ``offset_imag`` no node lies on the real axis."""
    dz = (re_range[1] - re_range[0]) / (count - 1)
    z_re = re_range[0] + dz * np.arange(count)
    n_im = int(round((im_range[1] - im_range[0]) / dz)) + 1
    z_im = im_range[0] + dz * np.arange(n_im)
    if offset_imag and np.any(np.abs(z_im) < 1e-12):
        z_im = z_im + 0.5 * dz
    return z_re, z_im, dz


def spectral_map(
    symbol: HolomorphicSymbol,
    reference: HolomorphicSymbol,
    manifold: IRManifold,
    z_re: np.ndarray,
    z_im: np.ndarray,
    ladder=None,
    exponents=None,
    hist_manifold: IRManifold | None = None,
    min_ref_distance: float = 1e-3,
) -> SpectralMap:
    """``I(z) = I(Lambda, (p - z)/(p_ref - z))`` on a z grid, its Laplacian and the pushforward of ``mu``.

    All ``z`` and all ``eps`` are accumulated in one pass over the manifold.
    ``laplacian`` is the five-point Laplacian divided by 4.  When ``p`` is
    real on the manifold the default ladder starts below the smallest
    ``|Im z|``, since the expansion in ``eps`` only holds for ``eps < |p - z|``.
    Grid nodes where the reference comes within ``min_ref_distance`` of ``z``
    are flagged and left as NaN.
    """
    Z = z_re[:, None] + 1j * z_im[None, :]
    zf = Z.ravel()
    real_p = is_real_on(symbol, manifold)
    if ladder is None:
        eps = default_ladder(min(0.2, 0.66 * float(np.min(np.abs(zf.imag)))), 4) if real_p else default_ladder()
    else:
        eps = np.asarray(ladder, dtype=float)
    exps = tuple(exponents) if exponents is not None else (2, 2, 4, 4, 6, 6)[: len(eps) - 1]
    sums = np.zeros((zf.size, len(eps)))
    ref_dist = np.full(zf.size, np.inf)
    eps2 = eps**2
    for c in manifold.chunks():
        p = symbol.value(c.rho)
        pr = reference.value(c.rho)
        w = c.base_weights * volume_density(c.frames)
        for i, z in enumerate(zf):
            d = np.abs(pr - z)
            ref_dist[i] = min(ref_dist[i], float(d.min()))
            sums[i] += kernels.reg_log_sums(np.abs(p - z) ** 2 / d**2, w, eps2)
    flags = (ref_dist < min_ref_distance).reshape(Z.shape)
    I = np.empty(zf.size)
    err = np.empty(zf.size)
    for i in range(zf.size):
        I[i], err[i], _ = extrapolate(eps, sums[i], exps)
    I = np.where(flags, np.nan, I.reshape(Z.shape))
    err = err.reshape(Z.shape)
    dz = float(z_re[1] - z_re[0])
    lap = np.full(Z.shape, np.nan)
    lap[1:-1, 1:-1] = (I[2:, 1:-1] + I[:-2, 1:-1] + I[1:-1, 2:] + I[1:-1, :-2] - 4 * I[1:-1, 1:-1]) / (4 * dz * dz)
    push = pushforward_cells(symbol, hist_manifold or manifold, z_re, z_im, dz)
    return SpectralMap(z_re, z_im, I, err, lap, push, dz, flags, real_p, eps)


def is_real_on(symbol: HolomorphicSymbol, manifold: IRManifold, tol: float = 1e-12) -> bool:
    """Whether ``p`` takes only real values on the manifold nodes."""
    for c in manifold.chunks():
        v = symbol.value(c.rho)
        if np.max(np.abs(v.imag)) > tol * max(1.0, float(np.max(np.abs(v)))):
            return False
    return True


def pushforward_cells(symbol: HolomorphicSymbol, manifold: IRManifold, z_re, z_im, dz: float) -> np.ndarray:
    """``mu{p in cell}`` for the square cells of side ``dz`` centred on the z grid."""
    out = np.zeros((len(z_re), len(z_im)))
    for c in manifold.chunks():
        p = symbol.value(c.rho)
        w = c.base_weights * volume_density(c.frames)
        i = np.floor((p.real - (z_re[0] - 0.5 * dz)) / dz).astype(np.int64)
        j = np.floor((p.imag - (z_im[0] - 0.5 * dz)) / dz).astype(np.int64)
        ok = (i >= 0) & (i < len(z_re)) & (j >= 0) & (j < len(z_im))
        np.add.at(out, (i[ok], j[ok]), w[ok])
    return out


def matrix_log_det_map(op: QuantizedOperator, ref: QuantizedOperator, Z: np.ndarray) -> np.ndarray:
    """``2 pi h log|det((P - z)(P_ref - z)^{-1})|`` from the eigenvalues of both matrices."""
    ev = np.linalg.eigvals(op.matrix)
    evr = np.linalg.eigvals(ref.matrix)
    zf = Z.ravel()
    out = np.array([np.sum(np.log(np.abs(ev - z))) - np.sum(np.log(np.abs(evr - z))) for z in zf])
    return (2 * math.pi * op.h * out).reshape(Z.shape)


# ----------------------------------------------------------------------------
# pushforward near a quadratic zero
# ----------------------------------------------------------------------------


def disc_masses(
    symbol: HolomorphicSymbol,
    r_values,
    action_max: float,
    action_nodes: int = 160,
    angle_nodes: int = 12,
) -> np.ndarray:
    """``mu{|p| < r}`` on real four-space, integrated in action-angle coordinates.

    Uses ``x_j = sqrt(2 i_j) cos t_j``, ``xi_j = sqrt(2 i_j) sin t_j`` with
    ``mu = di1 dt1 di2 dt2`` over ``i_j <= action_max``; midpoint rule in the
    actions, uniform in the angles.
    """
    if symbol.n != 2:
        raise ValueError("disc masses are implemented for n = 2")
    r_values = np.asarray(r_values, dtype=float)
    da = action_max / action_nodes
    acts = (np.arange(action_nodes) + 0.5) * da
    ang = 2 * np.pi * np.arange(angle_nodes) / angle_nodes
    I1, I2 = np.meshgrid(acts, acts, indexing="ij")
    I1, I2 = I1.ravel(), I2.ravel()
    w = da * da * (2 * np.pi / angle_nodes) ** 2
    out = np.zeros(len(r_values))
    for t1 in ang:
        for t2 in ang:
            s1, s2 = np.sqrt(2 * I1), np.sqrt(2 * I2)
            rho = np.stack([s1 * np.cos(t1), s2 * np.cos(t2), s1 * np.sin(t1), s2 * np.sin(t2)], axis=1).astype(complex)
            a = np.sort(np.abs(symbol.value(rho)))
            out += np.searchsorted(a, r_values, side="left") * w
    return out


@dataclass
class PushforwardComparison:
    r_values: np.ndarray
    nu: np.ndarray
    nu_hat: np.ndarray
    slope: float
    constant: float
    N0: float
    dominated: bool
    model_ratio: np.ndarray


def pushforward_comparison(
    symbol: HolomorphicSymbol,
    symbol_hat: HolomorphicSymbol,
    r_values,
    N0: float = 1.5,
    action_max: float | None = None,
    action_nodes: int = 160,
    angle_nodes: int = 12,
    model_mass=None,
) -> PushforwardComparison:
    """``nu(D(0, r))`` for two symbols with the same quadratic zero.

    Fits ``nu(D(0, r)) ~ r^slope`` and the smallest ``C`` with
    ``nu(D(0, r)) <= nu_hat(D(0, r + C r^N0))`` and the same with the roles
    swapped, at every ladder ``r`` (discs are the test sets ``V``).
    ``model_mass(r)``, when given, is compared with ``nu`` as a ratio.
    """
    r = np.asarray(r_values, dtype=float)
    amax = action_max or 3.0 * r.max()
    fine_r = np.linspace(0.0, 2.0 * r.max(), 401)[1:]
    nu_f = disc_masses(symbol, fine_r, amax, action_nodes, angle_nodes)
    nuh_f = disc_masses(symbol_hat, fine_r, amax, action_nodes, angle_nodes)
    nu = np.interp(r, fine_r, nu_f)
    nuh = np.interp(r, fine_r, nuh_f)

    def radius_needed(target, masses):
        idx = np.searchsorted(masses, target - 1e-15)
        return fine_r[min(idx, len(fine_r) - 1)]

    C = 0.0
    for ri, a, b in zip(r, nu, nuh):
        C = max(C, (radius_needed(a, nuh_f) - ri) / ri**N0, (radius_needed(b, nu_f) - ri) / ri**N0)
    dominated = bool(np.all(nu <= np.interp(r + C * r**N0, fine_r, nuh_f) + 1e-12)
                     and np.all(nuh <= np.interp(r + C * r**N0, fine_r, nu_f) + 1e-12))
    slope, _ = fit_power(r, nu)
    ratio = nu / np.array([model_mass(x) for x in r]) if model_mass is not None else np.full(len(r), np.nan)
    return PushforwardComparison(r, nu, nuh, slope, max(C, 0.0), N0, dominated, ratio)


def oscillator_disc_mass(mu1: float, mu2: float):
    """``(2 pi)^2 * area{i >= 0 : |mu1 i1 - i mu2 i2| < r}`` for the model ``mu1 i1 - i mu2 i2``."""
    return lambda r: (2 * math.pi) ** 2 * math.pi * r * r / (4 * mu1 * mu2)
