"""I-Lagrangian manifolds sampled on tensor grids, and their deformations.

A manifold is a base parametrization of ``R^{2n}`` (the real space itself or
the graph of ``d phi`` shifted into the imaginary direction) followed by a
history of flows of entire generators.  Node positions and tangent frames are
produced chunk by chunk on demand: each base chunk is pushed through the flow
history with RK4, and the tangent frame is transported by the linearized
field, so frames are exact up to the RK4 error rather than finite-difference
error.  Small manifolds cache their nodes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import kernels
from .symbols import (
    complex_to_real,
    deformation_field,
    hamilton_field,
    holomorphic_real_gradient,
    real_hamilton_field,
)


class FlowError(RuntimeError):
    """RK4 self-check failed or the flow left the admissible region."""


class GeneratorError(ValueError):
    """A generator is not real on real phase space or not entire."""


# ----------------------------------------------------------------------------
# generators
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class BasisElement:
    """``prod rho_j**exps_j * exp(-sum alphas_j (rho_j - centers_j)**2)``."""

    exps: tuple
    alphas: tuple
    centers: tuple

    def to_json(self) -> dict:
        return {"exps": list(self.exps), "alphas": list(self.alphas), "centers": list(self.centers)}

    @classmethod
    def from_json(cls, d: dict) -> "BasisElement":
        return cls(tuple(int(e) for e in d["exps"]), tuple(float(a) for a in d["alphas"]), tuple(float(c) for c in d["centers"]))


def basis_id(el: BasisElement) -> str:
    """Stable human-readable identifier for a basis element."""
    mono = "*".join(f"r{j}^{e}" for j, e in enumerate(el.exps) if e) or "1"
    if any(el.alphas):
        gauss = ",".join(f"{a:g}@{c:g}" for a, c in zip(el.alphas, el.centers))
        return f"{mono}*G[{gauss}]"
    return mono


@dataclass
class GeneratorFunction:
    """Entire generator, real on real phase space, as a finite basis expansion.

    ``coefficients`` has shape ``(deg+1, K)``: the coefficient of element ``k``
    at time ``t`` is ``sum_j coefficients[j, k] * t**j``.  An autonomous
    generator has ``deg = 0``.
    """

    n: int
    basis: tuple
    coefficients: np.ndarray

    def __post_init__(self):
        coefs = np.atleast_2d(np.asarray(self.coefficients))
        if coefs.shape[1] != len(self.basis):
            raise GeneratorError("coefficient count does not match basis size")
        self.coefficients = coefs
        for el in self.basis:
            if len(el.exps) != 2 * self.n or len(el.alphas) != 2 * self.n or len(el.centers) != 2 * self.n:
                raise GeneratorError("basis element dimension does not match n")
            if any(a < 0 for a in el.alphas):
                raise GeneratorError("Gaussian widths must be non-negative")
            if any(e < 0 for e in el.exps):
                raise GeneratorError("monomial exponents must be non-negative")

    # arrays for the kernels ---------------------------------------------------
    @property
    def arrays(self):
        exps = np.array([el.exps for el in self.basis], dtype=np.int64).reshape(-1, 2 * self.n)
        alphas = np.array([el.alphas for el in self.basis], dtype=float).reshape(-1, 2 * self.n)
        centers = np.array([el.centers for el in self.basis], dtype=float).reshape(-1, 2 * self.n)
        return exps, alphas, centers

    @property
    def autonomous(self) -> bool:
        return self.coefficients.shape[0] == 1 or not np.any(self.coefficients[1:])

    @property
    def is_real(self) -> bool:
        return bool(np.all(np.isreal(self.coefficients)))

    def coefficients_at(self, t: float = 0.0) -> np.ndarray:
        out = np.zeros(self.coefficients.shape[1], dtype=complex)
        for j in range(self.coefficients.shape[0] - 1, -1, -1):
            out = out * t + self.coefficients[j]
        return out

    def evaluate(self, rho, order: int = 1, t: float = 0.0, backend=None):
        exps, alphas, centers = self.arrays
        return kernels.generator_eval(rho, exps, alphas, centers, self.coefficients_at(t), order, backend=backend)

    def value(self, rho, t: float = 0.0):
        return self.evaluate(rho, 1, t)[0]

    def grad(self, rho, t: float = 0.0):
        return self.evaluate(rho, 1, t)[1]

    def validate(self) -> None:
        """Raise :class:`GeneratorError` unless the generator is real on real space."""
        if not self.is_real:
            raise GeneratorError("generator coefficients must be real (f must be real on real phase space)")

    def time_derivative(self) -> "GeneratorFunction":
        """``d f_t / dt`` at ``t = 0`` as an autonomous generator."""
        if self.coefficients.shape[0] == 1:
            return GeneratorFunction(self.n, self.basis, np.zeros((1, len(self.basis))))
        return GeneratorFunction(self.n, self.basis, self.coefficients[1:2].copy())

    def at_time(self, t: float) -> "GeneratorFunction":
        return GeneratorFunction(self.n, self.basis, self.coefficients_at(t)[None, :].real if self.is_real else self.coefficients_at(t)[None, :])

    def scaled(self, c: float) -> "GeneratorFunction":
        return GeneratorFunction(self.n, self.basis, c * self.coefficients)

    def __add__(self, other: "GeneratorFunction") -> "GeneratorFunction":
        if other.n != self.n:
            raise GeneratorError("dimension mismatch")
        deg = max(self.coefficients.shape[0], other.coefficients.shape[0])
        a = np.zeros((deg, len(self.basis)), dtype=np.result_type(self.coefficients, float))
        b = np.zeros((deg, len(other.basis)), dtype=np.result_type(other.coefficients, float))
        a[: self.coefficients.shape[0]] = self.coefficients
        b[: other.coefficients.shape[0]] = other.coefficients
        return GeneratorFunction(self.n, tuple(self.basis) + tuple(other.basis), np.concatenate([a, b], axis=1))

    def to_json(self) -> dict:
        coefs = self.coefficients
        payload = coefs.real.tolist() if self.is_real else [[[c.real, c.imag] for c in row] for row in coefs]
        return {
            "n": self.n,
            "basis_ids": [basis_id(el) for el in self.basis],
            "basis": [el.to_json() for el in self.basis],
            "coefficients": payload,
        }

    @classmethod
    def from_json(cls, d: dict) -> "GeneratorFunction":
        raw = d["coefficients"]
        arr = np.asarray(raw, dtype=float)
        if arr.ndim == 3:
            arr = arr[..., 0] + 1j * arr[..., 1]
        return cls(int(d["n"]), tuple(BasisElement.from_json(b) for b in d["basis"]), arr)


def _element(n: int, exps=None, alpha=0.0, center=None, alphas=None) -> BasisElement:
    d = 2 * n
    exps = tuple(int(e) for e in (exps if exps is not None else [0] * d))
    if alphas is None:
        alphas = [float(alpha)] * d
    center = tuple(float(c) for c in (center if center is not None else [0.0] * d))
    return BasisElement(exps, tuple(float(a) for a in alphas), center)


def monomial(n: int, exps: Sequence[int], coef: float = 1.0) -> GeneratorFunction:
    """``coef * prod rho_j**exps_j``."""
    return GeneratorFunction(n, (_element(n, exps),), np.array([[coef]]))


def coordinate(n: int, index: int, coef: float = 1.0) -> GeneratorFunction:
    """``coef * rho_index`` (``index < n`` is ``x``, otherwise ``xi``)."""
    exps = [0] * (2 * n)
    exps[index] = 1
    return monomial(n, exps, coef)


def gaussian_bump(n: int, center=None, alpha: float = 1.0, exps=None, coef: float = 1.0) -> GeneratorFunction:
    """``coef * rho**exps * exp(-alpha |rho - center|^2)``."""
    return GeneratorFunction(n, (_element(n, exps, alpha, center),), np.array([[coef]]))


def x_only(n: int, exps=None, alpha: float = 0.0, center=None, coef: float = 1.0) -> GeneratorFunction:
    """Function of ``x`` only (used for weight functions ``phi``)."""
    alphas = [alpha] * n + [0.0] * n
    exps = list(exps) + [0] * n if exps is not None else [0] * (2 * n)
    center = list(center) + [0.0] * n if center is not None else None
    return GeneratorFunction(n, (_element(n, exps, 0.0, center, alphas),), np.array([[coef]]))


def nonautonomous(f0: GeneratorFunction, f1: GeneratorFunction) -> GeneratorFunction:
    """The family ``f0 + t f1``."""
    basis = tuple(f0.basis) + tuple(f1.basis)
    coefs = np.zeros((2, len(basis)), dtype=np.result_type(f0.coefficients, f1.coefficients))
    coefs[0, : len(f0.basis)] = f0.coefficients[0]
    coefs[1, len(f0.basis):] = f1.coefficients[0]
    return GeneratorFunction(f0.n, basis, coefs)


def random_generator(n: int, rng: np.random.Generator, terms: int = 3, scale: float = 1.0) -> GeneratorFunction:
    """Random real combination of low-degree monomials times Gaussians."""
    basis = []
    for _ in range(terms):
        exps = rng.integers(0, 2, size=2 * n)
        center = rng.uniform(-0.8, 0.8, size=2 * n)
        alpha = rng.uniform(0.3, 1.0)
        basis.append(_element(n, exps, alpha, center))
    coefs = rng.normal(size=(1, terms)) * scale
    return GeneratorFunction(n, tuple(basis), coefs)


def generator_from_config(n: int, spec: dict) -> GeneratorFunction:
    """Build a generator from ``{"terms": [{"coef", "exps", "alpha", "center"}, ...]}``."""
    terms = spec.get("terms")
    if not terms:
        raise GeneratorError("generator needs a non-empty 'terms' list")
    basis = []
    coefs = []
    for term in terms:
        basis.append(_element(n, term.get("exps"), term.get("alpha", 0.0), term.get("center")))
        coefs.append(term.get("coef", 1.0))
    g = GeneratorFunction(n, tuple(basis), np.array([coefs]))
    g.validate()
    return g


# ----------------------------------------------------------------------------
# manifolds
# ----------------------------------------------------------------------------


@dataclass
class FlowStep:
    generator: GeneratorFunction
    t: float
    dt: float
    error_estimate: float = 0.0

    @property
    def nsteps(self) -> int:
        return max(1, int(math.ceil(abs(self.t) / self.dt - 1e-12)))

    def to_json(self) -> dict:
        g = self.generator.to_json()
        return {
            "coefficients": g["coefficients"],
            "basis_ids": g["basis_ids"],
            "basis": g["basis"],
            "n": g["n"],
            "t": self.t,
            "dt": self.dt,
            "error_estimate": self.error_estimate,
        }

    @classmethod
    def from_json(cls, d: dict) -> "FlowStep":
        return cls(GeneratorFunction.from_json(d), float(d["t"]), float(d["dt"]), float(d.get("error_estimate", 0.0)))


@dataclass
class Chunk:
    rho: np.ndarray  # (k, 2n) complex node positions
    frames: np.ndarray  # (k, 2n, 2n) complex tangent frames, column a = d rho / d u_a
    base_weights: np.ndarray  # (k,) trapezoid weights of the base grid
    start: int
    stop: int


_CACHE_LIMIT = 6_000_000  # complex entries of rho plus frames kept in memory


@dataclass
class IRManifold:
    """Grid-sampled I-Lagrangian manifold.

    ``representation`` is ``"weight_graph"`` while the history is empty and
    the base is a graph, ``"flow_grid"`` otherwise.  Base coordinates are
    ``u = (x, xi)`` on ``[-R, R]^{2n}`` with ``grid_shape`` nodes per axis.
    """

    n: int
    R: float
    grid_shape: tuple
    base_kind: str = "real"
    phi: GeneratorFunction | None = None
    history: list = field(default_factory=list)
    _cache: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.grid_shape = tuple(int(s) for s in self.grid_shape)
        if len(self.grid_shape) != 2 * self.n:
            raise ValueError("grid_shape must have 2n entries")
        if any(s < 3 for s in self.grid_shape):
            raise ValueError("need at least 3 nodes per axis")
        if self.base_kind not in ("real", "weight_graph"):
            raise ValueError("base_kind must be 'real' or 'weight_graph'")

    # constructors ---------------------------------------------------------------
    @classmethod
    def real_space(cls, n: int, R: float, nodes: int | Sequence[int]) -> "IRManifold":
        shape = (nodes,) * (2 * n) if np.isscalar(nodes) else tuple(nodes)
        return cls(n, float(R), shape)

    @classmethod
    def weight_graph(cls, phi: GeneratorFunction, R: float, nodes: int | Sequence[int]) -> "IRManifold":
        phi.validate()
        n = phi.n
        _, alphas, _ = phi.arrays
        exps, _, _ = phi.arrays
        if np.any(alphas[:, n:]) or np.any(exps[:, n:]):
            raise GeneratorError("weight function must depend on x only")
        shape = (nodes,) * (2 * n) if np.isscalar(nodes) else tuple(nodes)
        return cls(n, float(R), shape, base_kind="weight_graph", phi=phi)

    @property
    def representation(self) -> str:
        return "weight_graph" if (self.base_kind == "weight_graph" and not self.history) else "flow_grid"

    @property
    def dim(self) -> int:
        return 2 * self.n

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.grid_shape))

    @property
    def spacing(self) -> np.ndarray:
        return np.array([2 * self.R / (s - 1) for s in self.grid_shape])

    def axes(self) -> list:
        return [np.linspace(-self.R, self.R, s) for s in self.grid_shape]

    def with_grid(self, R: float | None = None, nodes=None) -> "IRManifold":
        """Same deformation on a different base grid."""
        shape = self.grid_shape if nodes is None else ((nodes,) * self.dim if np.isscalar(nodes) else tuple(nodes))
        return IRManifold(self.n, self.R if R is None else float(R), shape, self.base_kind, self.phi, list(self.history))

    # base grid ----------------------------------------------------------------
    def base_points(self, start: int, stop: int) -> tuple:
        """Base coordinates and trapezoid weights for flat node indices ``[start, stop)``."""
        idx = np.unravel_index(np.arange(start, stop), self.grid_shape)
        h = self.spacing
        u = np.empty((stop - start, self.dim))
        w = np.ones(stop - start)
        for a in range(self.dim):
            u[:, a] = -self.R + idx[a] * h[a]
            edge = (idx[a] == 0) | (idx[a] == self.grid_shape[a] - 1)
            w *= np.where(edge, 0.5 * h[a], h[a])
        return u, w

    def coarse_mask(self, start: int, stop: int) -> np.ndarray:
        """Weights of the every-other-node subgrid (zero off the subgrid)."""
        idx = np.unravel_index(np.arange(start, stop), self.grid_shape)
        w = np.ones(stop - start)
        for a in range(self.dim):
            s = self.grid_shape[a]
            H = 2 * 2 * self.R / (s - 1)
            on = idx[a] % 2 == 0
            edge = (idx[a] == 0) | (idx[a] == s - 1)
            w *= np.where(on, np.where(edge, 0.5 * H, H), 0.0)
        return w

    @property
    def supports_coarse(self) -> bool:
        return all(s % 2 == 1 for s in self.grid_shape)

    # embedding ----------------------------------------------------------------
    def embed_base(self, u: np.ndarray) -> tuple:
        """Base embedding ``u -> rho`` and its frame, before any flow."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        k = u.shape[0]
        n = self.n
        rho = u.astype(np.complex128)
        T = np.broadcast_to(np.eye(self.dim, dtype=np.complex128), (k, self.dim, self.dim)).copy()
        if self.base_kind == "weight_graph":
            _, g, H = self.phi.evaluate(rho.real.astype(np.complex128), order=2)
            rho[:, n:] += 1j * g[:, :n].real
            T[:, n:, :n] += 1j * H[:, :n, :n].real
        return rho, T

    def map_points(self, u: np.ndarray, frames: bool = True, backend=None) -> tuple:
        """Positions and tangent frames of the manifold at base coordinates ``u``."""
        rho, T = self.embed_base(u)
        for step in self.history:
            exps, alphas, centers = step.generator.arrays
            rho, T = kernels.rk4_flow(
                rho, T, exps, alphas, centers, step.generator.coefficients,
                0.0, step.t, step.nsteps, with_frames=frames, backend=backend,
            )
        return rho, T

    def chunks(self, chunk_size: int = 1 << 16, backend=None) -> Iterator[Chunk]:
        """Iterate over node chunks in flat index order."""
        N = self.num_nodes
        if self._cache is not None:
            rho_all, T_all, w_all = self._cache
            for start in range(0, N, chunk_size):
                stop = min(N, start + chunk_size)
                yield Chunk(rho_all[start:stop], T_all[start:stop], w_all[start:stop], start, stop)
            return
        cacheable = N * (self.dim + self.dim**2) <= _CACHE_LIMIT
        parts = []
        for start in range(0, N, chunk_size):
            stop = min(N, start + chunk_size)
            u, w = self.base_points(start, stop)
            rho, T = self.map_points(u, backend=backend)
            if cacheable:
                parts.append((rho, T, w))
            yield Chunk(rho, T, w, start, stop)
        if cacheable and parts:
            self._cache = tuple(np.concatenate([p[i] for p in parts]) for i in range(3))

    def materialize(self) -> tuple:
        """All nodes, frames and base weights as arrays."""
        parts = list(self.chunks())
        return tuple(np.concatenate([getattr(c, name) for c in parts]) for name in ("rho", "frames", "base_weights"))

    # serialization --------------------------------------------------------------
    def to_json(self) -> dict:
        return {
            "n": self.n,
            "representation": self.representation,
            "base_kind": self.base_kind,
            "phi": self.phi.to_json() if self.phi is not None else None,
            "grid_shape": list(self.grid_shape),
            "R": self.R,
            "generator_history": [s.to_json() for s in self.history],
        }

    @classmethod
    def from_json(cls, d: dict) -> "IRManifold":
        phi = GeneratorFunction.from_json(d["phi"]) if d.get("phi") else None
        hist = [FlowStep.from_json(s) for s in d.get("generator_history", [])]
        return cls(int(d["n"]), float(d["R"]), tuple(d["grid_shape"]), d.get("base_kind", "real"), phi, hist)


def to_flow_grid(manifold: IRManifold) -> IRManifold:
    """Convert a weight-graph manifold to the general flow-grid form (same nodes)."""
    return IRManifold(manifold.n, manifold.R, manifold.grid_shape, manifold.base_kind, manifold.phi, list(manifold.history))


def flow(
    manifold: IRManifold,
    f: GeneratorFunction,
    t: float,
    dt: float = 0.01,
    tol_flow: float = 1e-7,
    check_points: int = 256,
) -> IRManifold:
    """Deform ``manifold`` along the real field ``2 Re(i H_f)`` for time ``t``.

    The RK4 step is checked against a run with half the step on a
    deterministic subsample of nodes; the discrepancy is stored with the step
    and a :class:`FlowError` is raised above ``tol_flow``.
    """
    f.validate()
    if f.n != manifold.n:
        raise GeneratorError("generator dimension does not match manifold")
    if dt <= 0:
        raise ValueError("dt must be positive")
    step = FlowStep(f, float(t), float(dt))
    out = IRManifold(manifold.n, manifold.R, manifold.grid_shape, manifold.base_kind, manifold.phi, list(manifold.history) + [step])
    if t == 0:
        return out
    N = manifold.num_nodes
    idx = np.linspace(0, N - 1, min(check_points, N)).astype(np.int64)
    u_all = np.stack([manifold.base_points(int(i), int(i) + 1)[0][0] for i in idx])
    rho0, T0 = manifold.map_points(u_all)
    exps, alphas, centers = f.arrays
    full = kernels.rk4_flow(rho0, T0, exps, alphas, centers, f.coefficients, 0.0, t, step.nsteps)
    half = kernels.rk4_flow(rho0, T0, exps, alphas, centers, f.coefficients, 0.0, t, 2 * step.nsteps)
    err = max(float(np.max(np.abs(full[0] - half[0]))), float(np.max(np.abs(full[1] - half[1]))))
    if not np.isfinite(err):
        raise FlowError("flow produced non-finite values")
    step.error_estimate = err
    if err > tol_flow:
        raise FlowError(f"RK4 self-check residual {err:.3g} exceeds tol_flow {tol_flow:.3g}; reduce dt")
    return out


# ----------------------------------------------------------------------------
# geometry of frames
# ----------------------------------------------------------------------------


def frame_sigma(frames: np.ndarray) -> np.ndarray:
    """``sigma(T_a, T_b)`` for frames of shape ``(k, 2n, m)``; returns ``(k, m, m)``."""
    n = frames.shape[1] // 2
    Tx = frames[:, :n, :]
    Txi = frames[:, n:, :]
    return np.einsum("kja,kjb->kab", Txi, Tx) - np.einsum("kja,kjb->kab", Tx, Txi)


def pfaffian(omega: np.ndarray) -> np.ndarray:
    """Pfaffian of antisymmetric ``(k, m, m)`` matrices for ``m`` in {2, 4}."""
    m = omega.shape[-1]
    if m == 2:
        return omega[:, 0, 1]
    if m == 4:
        w = omega
        return w[:, 0, 1] * w[:, 2, 3] - w[:, 0, 2] * w[:, 1, 3] + w[:, 0, 3] * w[:, 1, 2]
    raise ValueError("pfaffian implemented for 2x2 and 4x4 only")


def volume_density(frames: np.ndarray) -> np.ndarray:
    """``|Pf(Re sigma(T_a, T_b))|``: symplectic volume per unit base volume."""
    return np.abs(pfaffian(frame_sigma(frames).real))


def symplectic_weights(manifold: IRManifold) -> np.ndarray:
    """Quadrature weights of the symplectic volume at every node."""
    out = np.empty(manifold.num_nodes)
    for c in manifold.chunks():
        out[c.start:c.stop] = c.base_weights * volume_density(c.frames)
    return out


@dataclass
class IRCheckReport:
    max_im_sigma: float
    min_gram_det: float
    fd_frame_residual: float
    ok: bool


def check_ir(manifold: IRManifold, tol_geom: float = 1e-6, fd_check: bool = True) -> IRCheckReport:
    """Check that ``Im sigma`` vanishes on the manifold and ``Re sigma`` is non-degenerate.

    Uses the transported tangent frames.  When ``fd_check`` is set, also
    reports the largest relative deviation of central-difference frames from
    the transported ones at interior nodes (a consistency diagnostic).
    """
    max_im = 0.0
    min_det = np.inf
    for c in manifold.chunks():
        s = frame_sigma(c.frames)
        max_im = max(max_im, float(np.max(np.abs(s.imag))))
        min_det = min(min_det, float(np.min(np.linalg.det(s.real))))
    fd_res = float("nan")
    if fd_check and manifold.num_nodes <= 400_000:
        rho, T, _ = manifold.materialize()
        rho = rho.reshape(manifold.grid_shape + (manifold.dim,))
        T = T.reshape(manifold.grid_shape + (manifold.dim, manifold.dim))
        h = manifold.spacing
        interior = tuple(slice(1, -1) for _ in manifold.grid_shape)
        worst = 0.0
        for a in range(manifold.dim):
            fwd = [slice(1, -1)] * manifold.dim
            bwd = [slice(1, -1)] * manifold.dim
            fwd[a] = slice(2, None)
            bwd[a] = slice(None, -2)
            fd = (rho[tuple(fwd)] - rho[tuple(bwd)]) / (2 * h[a])
            ref = T[interior][..., a]
            scale = max(1.0, float(np.max(np.abs(ref))))
            worst = max(worst, float(np.max(np.abs(fd - ref))) / scale)
        fd_res = worst
    ok = max_im <= tol_geom and min_det > 0
    return IRCheckReport(max_im, min_det, fd_res, bool(ok))


def deformation_distance(manifold: IRManifold, path: Sequence[tuple]) -> float:
    """Path length ``sum ||d(f|Lambda_t)||_inf dt`` of a piecewise deformation.

    ``path`` is a list of ``(generator, dt)``; the norm is the sup over nodes
    of the Euclidean norm of the tangential differential of ``Re f`` in base
    coordinates, evaluated at the start of each piece.
    """
    total = 0.0
    current = manifold
    for f, dt in path:
        worst = 0.0
        for c in current.chunks():
            g = f.grad(c.rho)
            tangential = np.einsum("kj,kja->ka", g, c.frames).real
            worst = max(worst, float(np.max(np.linalg.norm(tangential, axis=1))))
        total += worst * abs(dt)
        current = flow(current, f, dt, dt=min(0.01, abs(dt)) if dt else 0.01)
    return total


# ----------------------------------------------------------------------------
# field identities
# ----------------------------------------------------------------------------


def field_identities_check(f: GeneratorFunction, points: np.ndarray) -> dict:
    """Residuals of three identities between complex and real Hamilton fields.

    ``hat_H``: ``2 Re H_f`` equals the ``Re sigma`` field of ``Re f``.
    ``hat_iH``: ``-2 Im H_f`` equals the ``Im sigma`` field of ``Re f``.
    ``real_df``: for ``g = f(Re rho)`` (real differential when ``f`` has real
    coefficients), the ``Im sigma`` field of ``Re g`` equals ``4 Re(i H_g)``.
    Holomorphic identities need no reality; the last one fails when ``f`` has
    complex coefficients.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.complex128))
    n = f.n
    grad = f.grad(points)
    rg = holomorphic_real_gradient(grad)
    hat_H = complex_to_real(hamilton_field(grad))
    hat_iH = complex_to_real(deformation_field(grad))
    res_a = np.max(np.abs(hat_H - real_hamilton_field(rg, n, "re")))
    res_b = np.max(np.abs(hat_iH - real_hamilton_field(rg, n, "im")))
    # g(rho) = f(Re rho): real gradient (f', 0) per coordinate, complex-linear part f'/2
    gprime = f.grad(points.real.astype(np.complex128))
    g_real = np.zeros(gprime.shape[:-1] + (2 * gprime.shape[-1],))
    g_real[..., 0::2] = gprime.real
    lhs = real_hamilton_field(g_real, n, "im")
    rhs = 2.0 * complex_to_real(1j * hamilton_field(0.5 * gprime))
    res_c = np.max(np.abs(lhs - rhs))
    return {"hat_H": float(res_a), "hat_iH": float(res_b), "real_df": float(res_c)}


# ----------------------------------------------------------------------------
# persistence
# ----------------------------------------------------------------------------


def save_manifold(manifold: IRManifold, path: str | Path, with_nodes: bool = True) -> Path:
    """Write JSON metadata and, optionally, a little-endian float64 node sidecar."""
    path = Path(path)
    meta = manifold.to_json()
    if with_nodes:
        sidecar = path.with_suffix(".nodes.bin")
        rho, _, _ = manifold.materialize()
        interleaved = np.empty(rho.shape + (2,), dtype="<f8")
        interleaved[..., 0] = rho.real
        interleaved[..., 1] = rho.imag
        interleaved.tofile(sidecar)
        meta["nodes_file"] = sidecar.name
        meta["nodes_layout"] = "node-major, coordinates (x..., xi...), (re, im) pairs, float64 little-endian"
    path.write_text(json.dumps(meta, indent=2, sort_keys=True))
    return path


def load_manifold(path: str | Path) -> IRManifold:
    path = Path(path)
    meta = json.loads(path.read_text())
    m = IRManifold.from_json(meta)
    if meta.get("nodes_file"):
        raw = np.fromfile(path.parent / meta["nodes_file"], dtype="<f8")
        expected = m.num_nodes * m.dim * 2
        if raw.size != expected:
            raise ValueError(f"node sidecar has {raw.size} values, expected {expected}")
    return m
