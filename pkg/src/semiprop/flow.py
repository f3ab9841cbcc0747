"""Hamiltonian flow, tangent map, action and the Herman-Kluk prefactor.

The state integrated along each trajectory is ``(z, S, F)`` where ``F`` is the
``2d x 2d`` tangent map with blocks ``[[A, B], [C, D]]``.  Trajectories are
integrated in batches (one stacked ODE system), with an embedded 8(5,3)
Runge-Kutta pair and dense output.  Symplecticity is not built into the
scheme, so the residuals of ``A^T C = C^T A``, ``B^T D = D^T B`` and
``A^T D - C^T B = I`` measure the integration error independently.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from ._validation import check_phase_array, check_scalar
from .hamiltonians import HamiltonianModel, PhasePoint

__all__ = [
    "FlowIntegrationError",
    "BranchTrackingError",
    "SymplecticityError",
    "TrajectoryRecord",
    "TrajectoryBatch",
    "OmegaEstimate",
    "integrate_flow",
    "integrate_batch",
    "hk_prefactor",
    "prefactor_matrix",
    "auxiliary_matrices",
    "symplectic_residuals",
    "estimate_omega",
    "dump_trajectory_csv",
]

log = logging.getLogger(__name__)

# argument step that triggers checkpoint refinement, and the hard limit
REFINE_ARG_STEP = np.pi / 4
MAX_ARG_STEP = np.pi / 2


class FlowIntegrationError(RuntimeError):
    """Integration failed; ``last_time``/``last_state`` hold the last good values."""

    def __init__(self, message, last_time=None, last_state=None):
        super().__init__(message)
        self.last_time = last_time
        self.last_state = last_state


class BranchTrackingError(RuntimeError):
    """Checkpoints too coarse to continue ``det^{1/2} M_s`` without ambiguity."""


class SymplecticityError(RuntimeError):
    """A symplectic identity is violated beyond tolerance."""


def _state_size(d: int) -> int:
    return 2 * d + 1 + 4 * d * d


def _unpack(y: np.ndarray, d: int):
    """Split states of shape (..., n_s) into z, S, F."""
    z = y[..., : 2 * d]
    S = y[..., 2 * d]
    F = y[..., 2 * d + 1:].reshape(y.shape[:-1] + (2 * d, 2 * d))
    return z, S, F


def blocks(F: np.ndarray, d: int):
    return F[..., :d, :d], F[..., :d, d:], F[..., d:, :d], F[..., d:, d:]


def prefactor_matrix(F: np.ndarray, d: int) -> np.ndarray:
    """``M = C - B - i(A + D)`` from tangent maps of shape (..., 2d, 2d)."""
    A, B, C, D = blocks(F, d)
    return C - B - 1j * (A + D)


def _rhs_factory(model: HamiltonianModel, n: int):
    d = model.dim
    ns = _state_size(d)

    def rhs(s, y):
        Y = y.reshape(n, ns)
        z, _, F = _unpack(Y, d)
        g = model.grad(s, z)
        H = model.eval(s, z)
        Hs = model.hess(s, z)
        out = np.empty_like(Y)
        out[:, :d] = g[:, d:]
        out[:, d:2 * d] = -g[:, :d]
        out[:, 2 * d] = np.einsum("ni,ni->n", z[:, d:], g[:, d:]) - H
        JH = np.concatenate([Hs[:, d:, :], -Hs[:, :d, :]], axis=1)
        out[:, 2 * d + 1:] = (JH @ F).reshape(n, -1)
        if not np.all(np.isfinite(out)):
            raise FlowIntegrationError(f"non-finite derivative at s={s}", s, Y.copy())
        return out.ravel()

    return rhs


@dataclass
class TrajectoryBatch:
    """Many trajectories integrated together over ``[t0, t0 + t]``.

    ``checkpoints`` is the refined grid of times (relative to ``t0``) at
    which states and the continuous argument of ``det M_s`` are recorded.
    """

    model: HamiltonianModel
    t: float
    t0: float
    tol: float
    z0: np.ndarray            # (N, 2d)
    checkpoints: np.ndarray   # (K,)
    states: np.ndarray        # (K, N, n_s)
    det_arg: np.ndarray       # (K, N) continuous arg det M_s
    _dense: object = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.model.dim

    @property
    def size(self) -> int:
        return self.z0.shape[0]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    @property
    def zt(self) -> np.ndarray:
        return self.final[:, : 2 * self.dim]

    @property
    def action(self) -> np.ndarray:
        return self.final[:, 2 * self.dim]

    @property
    def tangent(self) -> np.ndarray:
        return _unpack(self.final, self.dim)[2]

    @property
    def prefactor(self) -> np.ndarray:
        """Continuously tracked ``det^{1/2} M_t`` for every trajectory."""
        M = prefactor_matrix(self.tangent, self.dim)
        mod = np.sqrt(np.abs(np.linalg.det(M)))
        return mod * np.exp(0.5j * self.det_arg[-1])

    def state_at(self, s) -> np.ndarray:
        """Dense-output states at relative times ``s``; shape (len(s), N, n_s)."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if self._dense is None:
            raise RuntimeError("batch was built without dense output")
        y = self._dense(self.t0 + s)  # (N*n_s, len(s))
        return y.T.reshape(s.size, self.size, -1)

    def record(self, k: int) -> "TrajectoryRecord":
        d = self.dim
        z, S, F = _unpack(self.states[:, k, :], d)
        A, B, C, D = blocks(F[-1], d)
        rec = TrajectoryRecord(
            t=self.t, t0=self.t0, z0=PhasePoint.from_z(self.z0[k]), zt=PhasePoint.from_z(z[-1]),
            action=float(S[-1]), A=A.copy(), B=B.copy(), C=C.copy(), D=D.copy(),
            prefactor=complex(self.prefactor[k]), branch_arg=float(self.det_arg[-1, k]),
            checkpoints=self.checkpoints.copy(), states=self.states[:, k, :].copy(),
            det_arg_path=self.det_arg[:, k].copy(), tol=self.tol, model_name=self.model.name,
        )
        rec._dense = (lambda s, kk=k: self.state_at(s)[:, kk, :]) if self._dense is not None else None
        rec.caustic_times, rec.caustic_multiplicities = _find_caustics(rec)
        return rec


@dataclass
class TrajectoryRecord:
    """One integrated trajectory from ``z0`` at time ``t0`` to ``t0 + t``."""

    t: float
    z0: PhasePoint
    zt: PhasePoint
    action: float
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    prefactor: complex
    branch_arg: float
    checkpoints: np.ndarray
    states: np.ndarray
    det_arg_path: np.ndarray
    t0: float = 0.0
    tol: float = 1e-10
    model_name: str = ""
    caustic_times: list = field(default_factory=list)
    caustic_multiplicities: list = field(default_factory=list)
    _dense: object = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.z0.dim

    @property
    def tangent(self) -> np.ndarray:
        return np.block([[self.A, self.B], [self.C, self.D]])

    @property
    def M(self) -> np.ndarray:
        return self.C - self.B - 1j * (self.A + self.D)

    def state_at(self, s) -> np.ndarray:
        if self._dense is None:
            raise RuntimeError("trajectory has no dense output attached")
        return self._dense(s)

    def blocks_at(self, s):
        """Blocks (A, B, C, D) at relative time ``s`` from dense output."""
        _, _, F = _unpack(self.state_at(s)[0], self.dim)
        return blocks(F, self.dim)


def _continuous_arg(detM: np.ndarray, arg0: np.ndarray) -> np.ndarray:
    steps = np.angle(detM[1:] / detM[:-1])
    return np.concatenate([arg0[None], arg0[None] + np.cumsum(steps, axis=0)], axis=0)


def integrate_batch(model: HamiltonianModel, z0, t: float, tol: float = 1e-10,
                    t0: float = 0.0, max_refine: int = 12) -> TrajectoryBatch:
    """Integrate the flow, tangent map and action for each row of ``z0``.

    The embedded pair's error norm is an RMS over all stacked components, so
    the requested tolerance is divided by ``sqrt(N)`` to keep per-trajectory
    errors at the ``tol`` level.
    """
    d = model.dim
    z0 = check_phase_array(np.atleast_2d(z0), d)
    tol = check_scalar(tol, "tol", min_val=0.0)
    t = check_scalar(float(t), "t")
    n = z0.shape[0]
    ns = _state_size(d)
    y0 = np.zeros((n, ns))
    y0[:, : 2 * d] = z0
    y0[:, 2 * d + 1:] = np.eye(2 * d).ravel()
    arg0 = np.full(n, -0.5 * np.pi * d)  # arg det M_0 = arg (-2i)^d, taken as -d*pi/2

    if t == 0.0:
        states = y0[None]
        return TrajectoryBatch(model, 0.0, t0, tol, z0, np.zeros(1), states, arg0[None].copy(),
                               _dense=lambda s: np.repeat(y0.ravel()[:, None], np.size(s), axis=1))

    tol_eff = tol / np.sqrt(n)
    rhs = _rhs_factory(model, n)
    sol = solve_ivp(rhs, (t0, t0 + t), y0.ravel(), method="DOP853", rtol=tol_eff,
                    atol=tol_eff, dense_output=True)
    if sol.status != 0:
        raise FlowIntegrationError(f"flow integration failed: {sol.message}", sol.t[-1] - t0,
                                   sol.y[:, -1].reshape(n, ns))
    s = sol.t - t0
    states = sol.y.T.reshape(s.size, n, ns)

    for _ in range(max_refine):
        detM = np.linalg.det(prefactor_matrix(_unpack(states, d)[2], d))
        jumps = np.abs(np.angle(detM[1:] / detM[:-1])).max(axis=1)
        bad = np.nonzero(jumps > REFINE_ARG_STEP)[0]
        if bad.size == 0:
            break
        mids = 0.5 * (s[bad] + s[bad + 1])
        extra = sol.sol(t0 + mids).T.reshape(mids.size, n, ns)
        s = np.concatenate([s, mids])
        states = np.concatenate([states, extra])
        order = np.argsort(s)
        s, states = s[order], states[order]
    detM = np.linalg.det(prefactor_matrix(_unpack(states, d)[2], d))
    det_arg = _continuous_arg(detM, arg0)
    return TrajectoryBatch(model, t, t0, tol, z0, s, states, det_arg, _dense=sol.sol)


def integrate_flow(model: HamiltonianModel, z0, t: float, tol: float = 1e-10,
                   t0: float = 0.0) -> TrajectoryRecord:
    """Integrate a single trajectory; ``t`` may be negative (backward flow)."""
    if isinstance(z0, PhasePoint):
        z0 = z0.z
    batch = integrate_batch(model, np.asarray(z0, dtype=float)[None, :], t, tol, t0)
    return batch.record(0)


def hk_prefactor(traj: TrajectoryRecord) -> complex:
    """Branch of ``det^{1/2} M_t`` continued along the recorded checkpoints.

    The starting value is ``(sqrt(2) e^{-i pi/4})^d``.  Raises
    :class:`BranchTrackingError` if the argument of ``det M_s`` moves by
    ``pi/2`` or more between consecutive checkpoints.
    """
    d = traj.dim
    _, _, F = _unpack(traj.states, d)
    detM = np.linalg.det(prefactor_matrix(F, d))
    steps = np.angle(detM[1:] / detM[:-1])
    if steps.size and np.abs(steps).max() >= MAX_ARG_STEP:
        k = int(np.abs(steps).argmax())
        raise BranchTrackingError(
            f"arg det M jumps by {steps[k]:.3f} between s={traj.checkpoints[k]:.6g} and "
            f"s={traj.checkpoints[k + 1]:.6g}; re-integrate with denser checkpoints")
    arg = -0.5 * np.pi * d + steps.sum()
    traj.branch_arg = float(arg)
    traj.prefactor = complex(np.sqrt(abs(detM[-1])) * np.exp(0.5j * arg))
    return traj.prefactor


def symplectic_residuals(A, B, C, D) -> dict:
    """Max-abs residuals of the three block identities and of ``det F - 1``."""
    I = np.eye(A.shape[-1])
    F = np.block([[A, B], [C, D]])
    return {
        "AtC": float(np.abs(A.T @ C - C.T @ A).max()),
        "BtD": float(np.abs(B.T @ D - D.T @ B).max()),
        "AtD_CtB": float(np.abs(A.T @ D - C.T @ B - I).max()),
        "det": float(abs(np.linalg.det(F) - 1.0)),
    }


def auxiliary_matrices(traj: TrajectoryRecord, tol: float = 1e-6):
    """Return ``(Y_t, Z_t)`` after checking ``Y*Y - Z*Z = 4I`` and ``s_min(Y) >= 2``."""
    A, B, C, D = traj.A, traj.B, traj.C, traj.D
    Y = A + D + 1j * (B - C)
    Z = A - D + 1j * (B + C)
    d = A.shape[0]
    scale = max(1.0, float(np.abs(Y).max()) ** 2)
    resid = float(np.abs(Y.conj().T @ Y - Z.conj().T @ Z - 4 * np.eye(d)).max())
    smin = float(np.linalg.svd(Y, compute_uv=False).min())
    if resid > tol * scale or smin < 2.0 - tol:
        raise SymplecticityError(
            f"Y*Y - Z*Z - 4I residual {resid:.3e}, smallest singular value of Y {smin:.9f}")
    return Y, Z


def _find_caustics(traj: TrajectoryRecord):
    """Times in (0, t) where det B_s vanishes, refined by bisection on dense output."""
    d = traj.dim
    s = traj.checkpoints
    if s.size < 3:
        return [], []
    _, _, F = _unpack(traj.states, d)
    Bs = F[:, :d, d:]
    detB = np.linalg.det(Bs)
    normB = np.linalg.norm(Bs, ord=2, axis=(1, 2))
    thresh = 1e-10 * np.maximum(normB, 1e-300) ** d
    times, mults = [], []

    def detB_at(si):
        return float(np.linalg.det(traj.blocks_at(si)[1]))

    for k in range(1, s.size - 1):
        a, b = detB[k], detB[k + 1]
        tc = None
        if a == 0.0:
            tc = s[k]
        elif a * b < 0:
            tc = brentq(detB_at, s[k], s[k + 1], xtol=1e-14, rtol=1e-14) if traj._dense else 0.5 * (s[k] + s[k + 1])
        elif abs(a) < thresh[k] and abs(a) <= abs(detB[k - 1]) and abs(a) <= abs(b):
            tc = s[k]  # touching zero without sign change
        if tc is not None and 0 < abs(tc) < abs(s[-1]):
            Bc = traj.blocks_at(tc)[1] if traj._dense else Bs[k]
            sv = np.linalg.svd(np.atleast_2d(Bc), compute_uv=False)
            times.append(float(tc))
            mults.append(max(1, int(np.sum(sv < 1e-6 * max(sv.max(), 1.0)))))
    return times, mults


@dataclass
class OmegaEstimate:
    """Estimated growth function ``omega(t)`` and its fitted exponential rate."""

    times: np.ndarray
    omega: np.ndarray
    gamma_fit: float
    raw: np.ndarray = field(default=None, repr=False)


def estimate_omega(model: HamiltonianModel, T: float, sample_set: Sequence, tol: float = 1e-10,
                   n_times: int = 101, tail: float = 0.5) -> OmegaEstimate:
    """Estimate ``omega(t)`` on ``[0, T]`` as the max tangent-map norm over samples.

    Both time directions are integrated (omega is even).  The raw maxima are
    replaced by their running maximum and floored at 1; ``gamma_fit`` is the
    slope of ``log omega`` against ``t`` on the last ``tail`` fraction of the grid.
    """
    T = check_scalar(float(T), "T", min_val=0.0)
    pts = np.array([p.z if isinstance(p, PhasePoint) else np.asarray(p, dtype=float) for p in sample_set])
    if pts.size == 0:
        raise ValueError("sample_set must be nonempty")
    times = np.linspace(0.0, T, n_times)
    raw = np.ones(n_times)
    for sign in (1.0, -1.0):
        batch = integrate_batch(model, pts, sign * T, tol)
        F = _unpack(batch.state_at(sign * times), model.dim)[2]
        norms = np.linalg.norm(F, ord=2, axis=(-2, -1)).max(axis=1)
        raw = np.maximum(raw, norms)
    omega = np.maximum(np.maximum.accumulate(raw), 1.0)
    sel = times >= (1.0 - tail) * T
    gamma = float(np.polyfit(times[sel], np.log(omega[sel]), 1)[0]) if sel.sum() >= 2 else 0.0
    return OmegaEstimate(times, omega, gamma, raw)


def dump_trajectory_csv(traj: TrajectoryRecord, path) -> None:
    """Write checkpoints as CSV: s, q, p, S, vec(A..D), Re/Im det^{1/2} M_s."""
    d = traj.dim
    z, S, F = _unpack(traj.states, d)
    M = prefactor_matrix(F, d)
    pref = np.sqrt(np.abs(np.linalg.det(M))) * np.exp(0.5j * traj.det_arg_path)
    names = {"A": (slice(0, d), slice(0, d)), "B": (slice(0, d), slice(d, 2 * d)),
             "C": (slice(d, 2 * d), slice(0, d)), "D": (slice(d, 2 * d), slice(d, 2 * d))}
    header = ["s"] + [f"q{i}" for i in range(d)] + [f"p{i}" for i in range(d)] + ["S"]
    header += [f"{b}{i}{j}" for b in "ABCD" for i in range(d) for j in range(d)]
    header += ["re_prefactor", "im_prefactor"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k, s in enumerate(traj.checkpoints):
            row = [repr(float(s))] + [repr(float(v)) for v in z[k]] + [repr(float(S[k]))]
            for b in "ABCD":
                row += [repr(float(v)) for v in F[k][names[b]].ravel()]
            row += [repr(float(pref[k].real)), repr(float(pref[k].imag))]
            w.writerow(row)
