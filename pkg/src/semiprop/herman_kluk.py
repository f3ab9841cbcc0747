"""Herman-Kluk propagator at leading amplitude order.

The kernel is a phase-space integral over initial points ``z = (q, p)``:

    K_t(x, y) = c_d (2 pi hbar)^{-3d/2} int e^{i Phi(t, x, y, z)/hbar} det^{1/2} M_t(z) Theta(p) dz,
    Phi = S + p_t.(x - q_t) - p.(y - q) + (i/2)(|x - q_t|^2 + |y - q|^2).

``det^{1/2} M_t`` is continued from ``(sqrt(2) e^{-i pi/4})^d`` at t = 0, and
``c_d = e^{i pi d/4}`` then makes the t = 0 kernel the identity.  Only the
leading amplitude ``a_0 = 1`` is implemented.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import qmc
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_is_fitted, check_positions, check_scalar
from .flow import TrajectoryBatch, TrajectoryRecord, integrate_batch
from .hamiltonians import HamiltonianModel
from .reference import NyquistError, smooth_window
from .wavefunction import GridSpec, WaveFunction

__all__ = [
    "PhaseSpaceQuadrature",
    "ThetaMultiplier",
    "QuadratureCoverageWarning",
    "hk_normalization",
    "hk_phase",
    "hk_kernel",
    "propagate_hk",
    "apply_theta",
    "HermanKlukPropagator",
]

CHUNK = 512


class QuadratureCoverageWarning(UserWarning):
    """Boundary nodes of the phase-space grid carry non-negligible weight."""


def hk_normalization(d: int) -> complex:
    """``c_d = e^{i pi d / 4}``, so that ``c_d det^{1/2} M_0 = 2^{d/2}``."""
    return complex(np.exp(0.25j * np.pi * d))


@dataclass
class PhaseSpaceQuadrature:
    """Nodes ``z_k = (q_k, p_k)`` with positive weights ``w_k``."""

    nodes: np.ndarray
    weights: np.ndarray
    spec: dict = field(default_factory=dict)
    boundary: Optional[np.ndarray] = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if self.nodes.shape[0] == 0 or self.nodes.shape[1] % 2:
            raise ValueError(f"nodes must have shape (N > 0, 2d), got {self.nodes.shape}")
        if self.weights.shape != (self.nodes.shape[0],) or np.any(self.weights <= 0):
            raise ValueError("weights must be positive, one per node")
        if self.boundary is None:
            self.boundary = np.zeros(self.size, dtype=bool)

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def dim(self) -> int:
        return self.nodes.shape[1] // 2

    @property
    def volume(self) -> float:
        return float(self.weights.sum())

    @classmethod
    def tensor(cls, bounds: Sequence[Sequence[float]], counts: Sequence[int]) -> "PhaseSpaceQuadrature":
        """Trapezoid rule on a box; ``bounds`` lists (lo, hi) for q_1..q_d, p_1..p_d."""
        bounds = [tuple(map(float, b)) for b in bounds]
        counts = [int(c) for c in counts]
        if len(bounds) != len(counts) or len(bounds) % 2:
            raise ValueError("need one (lo, hi) and one count per phase-space axis")
        axes, wts, edges = [], [], []
        for (lo, hi), n in zip(bounds, counts):
            if n < 2 or not hi > lo:
                raise ValueError(f"bad axis ({lo}, {hi}) with {n} points")
            x = np.linspace(lo, hi, n)
            w = np.full(n, (hi - lo) / (n - 1))
            w[[0, -1]] *= 0.5
            e = np.zeros(n, dtype=bool)
            e[[0, -1]] = True
            axes.append(x)
            wts.append(w)
            edges.append(e)
        mesh = np.meshgrid(*axes, indexing="ij")
        nodes = np.stack([m.ravel() for m in mesh], axis=-1)
        weights = np.prod(np.stack([m.ravel() for m in np.meshgrid(*wts, indexing="ij")]), axis=0)
        boundary = np.any(np.stack([m.ravel() for m in np.meshgrid(*edges, indexing="ij")]), axis=0)
        spec = {"kind": "tensor", "bounds": bounds, "counts": counts}
        return cls(nodes, weights, spec, boundary)

    @classmethod
    def tensor_spacing(cls, bounds, spacing: float) -> "PhaseSpaceQuadrature":
        counts = [max(2, int(np.ceil((hi - lo) / spacing)) + 1) for lo, hi in bounds]
        return cls.tensor(bounds, counts)

    @classmethod
    def sobol(cls, bounds, n: int, seed: int = 0) -> "PhaseSpaceQuadrature":
        """Scrambled Sobol points with equal weights ``volume / n``."""
        bounds = np.asarray(bounds, dtype=float)
        pts = qmc.Sobol(d=len(bounds), scramble=True, seed=seed).random(n)
        nodes = qmc.scale(pts, bounds[:, 0], bounds[:, 1])
        vol = float(np.prod(bounds[:, 1] - bounds[:, 0]))
        spec = {"kind": "sobol", "bounds": bounds.tolist(), "n": n, "seed": seed}
        return cls(nodes, np.full(n, vol / n), spec)

    @classmethod
    def for_wavefunction(cls, psi: WaveFunction, tol: float = 1e-10,
                         spacing_factor: float = 1 / 3) -> "PhaseSpaceQuadrature":
        """Tensor grid covering the phase-space support of ``psi``.

        Position and momentum extents are read off ``|psi|^2`` and its
        hbar-scaled Fourier transform, then widened by
        ``sqrt(4 hbar log(1/tol))`` (the decay length of coherent-state overlaps).
        Momenta are clipped to the grid's Nyquist range, beyond which the
        sampled coherent states alias.
        """
        g = psi.grid
        h = g.hbar
        pad = np.sqrt(4 * h * np.log(1 / tol))
        dens = np.abs(psi.values) ** 2
        spec = np.abs(np.fft.fftn(psi.values)) ** 2
        bounds_q, bounds_p = [], []
        for ax, (x, k) in enumerate(zip(g.axes(), g.wavenumbers())):
            other = tuple(i for i in range(g.dim) if i != ax)
            marg = dens.sum(axis=other) if other else dens
            sel = x[marg >= tol * marg.max()]
            bounds_q.append((sel.min() - pad, sel.max() + pad))
            mspec = spec.sum(axis=other) if other else spec
            sel = h * k[mspec >= tol * mspec.max()]
            pmax = g.max_momentum()[ax]
            bounds_p.append((max(sel.min() - pad, -pmax), min(sel.max() + pad, pmax)))
        out = cls.tensor_spacing(bounds_q + bounds_p, spacing_factor * np.sqrt(h))
        out.spec["hbar"] = h
        return out

    @classmethod
    def for_kernel(cls, model: HamiltonianModel, t: float, x, y, hbar: float, tol: float = 1e-10,
                   p_box: float = 10.0, spacing_factor: float = 1 / 3, n_scan: int = 401,
                   flow_tol: float = 1e-9) -> "PhaseSpaceQuadrature":
        """Tensor grid for ``K_t(x, y)`` in d = 1.

        q covers ``y +- sqrt(2 hbar log(1/tol))``; the p range is the set of
        momenta in ``[-p_box, p_box]`` for which some q in that range reaches
        within the same radius of x, padded by one scan spacing.
        """
        if model.dim != 1:
            raise ValueError("for_kernel builds grids for d = 1; use tensor() for d > 1")
        x = float(np.ravel(x)[0])
        y = float(np.ravel(y)[0])
        R = np.sqrt(2 * hbar * np.log(1 / tol))
        qs = np.linspace(y - R, y + R, 9)
        ps = np.linspace(-p_box, p_box, n_scan)
        Q, P = np.meshgrid(qs, ps, indexing="ij")
        if t == 0:
            raise ValueError("the t = 0 kernel is a delta; use for_wavefunction")
        batch = integrate_batch(model, np.stack([Q.ravel(), P.ravel()], axis=-1), t, flow_tol)
        miss = np.abs(batch.zt[:, 0] - x).reshape(Q.shape).min(axis=0)
        hit = ps[miss <= R + 1e-12]
        if hit.size == 0:
            raise ValueError("no momentum in the scan box brings y near x; enlarge p_box")
        dp = ps[1] - ps[0]
        bounds = [(y - R, y + R), (hit.min() - 2 * dp, hit.max() + 2 * dp)]
        out = cls.tensor_spacing(bounds, spacing_factor * np.sqrt(hbar))
        out.spec["hbar"] = hbar
        return out

    def trajectories(self, model: HamiltonianModel, t: float, tol: float = 1e-10) -> TrajectoryBatch:
        """Integrate (and cache) every node's trajectory to time ``t``."""
        key = (id(model), float(t), float(tol))
        if key not in self._cache:
            self._cache[key] = integrate_batch(model, self.nodes, t, tol)
        return self._cache[key]


@dataclass
class ThetaMultiplier:
    """Fourier multiplier ``Theta(p)`` with compact support in ``support_box``."""

    theta: Callable
    support_box: list
    bound: float = 1.0

    def __post_init__(self):
        if not callable(self.theta):
            raise TypeError("theta must be callable")
        self.support_box = [tuple(map(float, b)) for b in self.support_box]
        d = len(self.support_box)
        rng = np.random.default_rng(0)
        lo = np.array([b[0] for b in self.support_box])
        hi = np.array([b[1] for b in self.support_box])
        inside = lo + (hi - lo) * rng.random((64, d))
        if np.abs(self(inside)).max() > self.bound * (1 + 1e-12):
            raise ValueError("theta exceeds its stated bound inside the support box")
        span = hi - lo
        outside = np.concatenate([lo - span * (0.01 + rng.random((16, d))),
                                  hi + span * (0.01 + rng.random((16, d)))])
        if np.abs(self(outside)).max() > 0:
            raise ValueError("theta does not vanish outside support_box")

    @property
    def dim(self) -> int:
        return len(self.support_box)

    def __call__(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        p = p.reshape(-1, self.dim) if p.ndim < 2 else p
        return np.asarray(self.theta(p), dtype=complex).reshape(p.shape[0])

    @classmethod
    def window(cls, lo, hi, taper: float) -> "ThetaMultiplier":
        """Product of smooth flat-top windows, 1 on [lo, hi] per axis."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))

        def theta(p):
            return np.prod([smooth_window(p[:, i], lo[i], hi[i], taper) for i in range(lo.size)], axis=0)

        box = [(a - taper, b + taper) for a, b in zip(lo, hi)]
        return cls(theta, box)

    @classmethod
    def zero(cls, dim: int = 1) -> "ThetaMultiplier":
        return cls(lambda p: np.zeros(p.shape[0]), [(-1.0, 1.0)] * dim)


def hk_phase(traj: TrajectoryRecord, x, y) -> complex:
    """Complex Herman-Kluk phase for one trajectory; ``Im Phi >= 0``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    q, p = traj.z0.q, traj.z0.p
    qt, pt = traj.zt.q, traj.zt.p
    dx, dy = x - qt, y - q
    return complex(traj.action + pt @ dx - p @ dy + 0.5j * (dx @ dx + dy @ dy))


def _phase_batch(batch: TrajectoryBatch, nodes: np.ndarray, x: np.ndarray, y: np.ndarray):
    d = batch.dim
    q, p = nodes[:, :d], nodes[:, d:]
    zt = batch.zt
    qt, pt = zt[:, :d], zt[:, d:]
    dx, dy = x - qt, y - q
    return (batch.action + np.sum(pt * dx, axis=1) - np.sum(p * dy, axis=1)
            + 0.5j * (np.sum(dx * dx, axis=1) + np.sum(dy * dy, axis=1)))


def _coverage(terms: np.ndarray, boundary: np.ndarray, tol: float) -> float:
    total = np.abs(terms).sum()
    if total == 0 or not boundary.any():
        return 0.0
    mass = float(np.abs(terms[boundary]).sum() / total)
    if mass > tol:
        warnings.warn(f"boundary nodes carry relative weight {mass:.2e}; enlarge the quadrature box",
                      QuadratureCoverageWarning, stacklevel=3)
    return mass


def hk_kernel(model: HamiltonianModel, t: float, x, y, quad: PhaseSpaceQuadrature, hbar: float,
              theta: Optional[ThetaMultiplier] = None, tol: float = 1e-8,
              flow_tol: float = 1e-10):
    """Herman-Kluk kernel ``K_t(x, y)``; x and y may be arrays of points (one per row)."""
    d = model.dim
    hbar = check_scalar(hbar, "hbar", min_val=0.0)
    if quad.dim != d:
        raise ValueError("quadrature dimension does not match the model")
    X = check_positions(x, d)
    Y = check_positions(y, d)
    if X.shape != Y.shape:
        raise ValueError("x and y must contain the same number of points")
    batch = quad.trajectories(model, t, flow_tol)
    amp = quad.weights * batch.prefactor
    if theta is not None:
        amp = amp * theta(quad.nodes[:, d:])
    norm = hk_normalization(d) * (2 * np.pi * hbar) ** (-1.5 * d)
    out = np.empty(X.shape[0], dtype=complex)
    for i, (xi, yi) in enumerate(zip(X, Y)):
        phi = _phase_batch(batch, quad.nodes, xi, yi)
        if phi.imag.min() < -1e-12:
            raise AssertionError("Im Phi < 0 at a quadrature node")
        terms = amp * np.exp(1j * phi / hbar)
        _coverage(terms, quad.boundary, tol)
        out[i] = norm * terms.sum()
    return complex(out[0]) if np.ndim(x) <= 1 and X.shape[0] == 1 else out


def propagate_hk(model: HamiltonianModel, psi0: WaveFunction, t: float,
                 quad: Optional[PhaseSpaceQuadrature] = None,
                 theta: Optional[ThetaMultiplier] = None, tol: float = 1e-8,
                 flow_tol: float = 1e-10, out_grid: Optional[GridSpec] = None) -> WaveFunction:
    """Propagate ``psi0`` with the Herman-Kluk integral, node by node.

    Each node contributes its coherent-state overlap with ``psi0`` times the
    transported Gaussian at ``(q_t, p_t)``.
    """
    d = model.dim
    if psi0.dim != d:
        raise ValueError("wave function and model dimensions differ")
    h = psi0.hbar
    if quad is None:
        quad = PhaseSpaceQuadrature.for_wavefunction(psi0)
    grid_in = psi0.grid
    grid_out = out_grid or grid_in
    ys = grid_in.points()
    xs = grid_out.points()
    psi_flat = psi0.values.ravel()
    batch = quad.trajectories(model, t, flow_tol)
    amp = quad.weights * batch.prefactor
    if theta is not None:
        amp = amp * theta(quad.nodes[:, d:])
    norm = hk_normalization(d) * (2 * np.pi * h) ** (-1.5 * d)
    q, p = quad.nodes[:, :d], quad.nodes[:, d:]
    zt = batch.zt
    qt, pt = zt[:, :d], zt[:, d:]
    S = batch.action
    out = np.zeros(xs.shape[0], dtype=complex)
    coeff = np.empty(quad.size, dtype=complex)
    for s in range(0, quad.size, CHUNK):
        sl = slice(s, s + CHUNK)
        dy = ys[None, :, :] - q[sl, None, :]
        g = np.exp(-1j * np.einsum("kd,kjd->kj", p[sl], dy) / h - np.sum(dy * dy, axis=2) / (2 * h))
        coeff[sl] = amp[sl] * (g @ psi_flat) * grid_in.cell_volume
    _coverage(coeff, quad.boundary, tol)
    for s in range(0, quad.size, CHUNK):
        sl = slice(s, s + CHUNK)
        dx = xs[None, :, :] - qt[sl, None, :]
        g = np.exp(1j * (S[sl, None] + np.einsum("kd,kjd->kj", pt[sl], dx)) / h
                   - np.sum(dx * dx, axis=2) / (2 * h))
        out += coeff[sl] @ g
    return WaveFunction(grid_out, norm * out)


def apply_theta(psi: WaveFunction, theta: ThetaMultiplier) -> WaveFunction:
    """Apply ``Theta(hbar D)`` with an hbar-scaled FFT."""
    g = psi.grid
    if theta.dim != g.dim:
        raise ValueError("multiplier and wave function dimensions differ")
    pmax = g.max_momentum()
    need = np.array([max(abs(lo), abs(hi)) for lo, hi in theta.support_box])
    if np.any(need >= pmax):
        raise NyquistError(f"support of Theta reaches |p| = {need.max():.4g}, grid resolves "
                           f"only {pmax.min():.4g}")
    mesh = np.meshgrid(*[g.hbar * k for k in g.wavenumbers()], indexing="ij")
    P = np.stack([m.ravel() for m in mesh], axis=-1)
    mult = theta(P).reshape(g.counts)
    return WaveFunction(g, np.fft.ifftn(mult * np.fft.fftn(psi.values)))


class HermanKlukPropagator(TransformerMixin, BaseEstimator):
    """Estimator-style wrapper: ``fit`` caches node trajectories, ``transform`` propagates.

    Parameters
    ----------
    model : HamiltonianModel
    t : float
        Propagation time.
    quad : PhaseSpaceQuadrature, optional
        Built from the first fitted wave function when omitted.
    theta : ThetaMultiplier, optional
    tol : float
        Coverage tolerance for boundary nodes.
    flow_tol : float
        Integration tolerance for the node trajectories.
    """

    def __init__(self, model=None, t=1.0, quad=None, theta=None, tol=1e-8, flow_tol=1e-10,
                 spacing_factor=1 / 3):
        self.model = model
        self.t = t
        self.quad = quad
        self.theta = theta
        self.tol = tol
        self.flow_tol = flow_tol
        self.spacing_factor = spacing_factor

    def fit(self, X: WaveFunction, y=None):
        if self.model is None:
            raise ValueError("model must be set")
        quad = self.quad or PhaseSpaceQuadrature.for_wavefunction(X, spacing_factor=self.spacing_factor)
        self.quad_ = quad
        self.batch_ = quad.trajectories(self.model, self.t, self.flow_tol)
        self.n_nodes_ = quad.size
        return self

    def transform(self, X: WaveFunction) -> WaveFunction:
        check_is_fitted(self, "batch_")
        return propagate_hk(self.model, X, self.t, self.quad_, self.theta, self.tol, self.flow_tol)

    def kernel(self, x, y, hbar: float):
        check_is_fitted(self, "batch_")
        return hk_kernel(self.model, self.t, x, y, self.quad_, hbar, self.theta, self.tol, self.flow_tol)
