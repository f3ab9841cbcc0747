"""Van Vleck trajectory sums with Maslov indices.

For fixed ``(t, x, y)`` the classical branches are the momenta ``eta`` with
``q_t(y, eta) = x``.  Each contributes

    (2 pi i hbar)^{-d/2} e^{i S/hbar - i pi theta/2} |det B_t^{-1}|^{1/2} (b_0 + hbar b_1 + ...).

The index ``theta`` comes from the stationary-phase evaluation of the
Herman-Kluk integral at the branch and is cross-checked by counting zeros of
``det B_s`` along the trajectory.  Corrections ``b_k`` (k >= 1) are obtained
by expanding that same integral (leading amplitude only) with Taylor jets of
the flow propagated through the Hamiltonian symbol.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from sklearn.base import BaseEstimator

from ._validation import as_vector, check_is_fitted, check_scalar
from .flow import TrajectoryRecord, auxiliary_matrices, integrate_batch, integrate_flow
from .hamiltonians import HamiltonianModel
from .herman_kluk import hk_normalization
from .jets import Jet
from .stationary_phase import det_sqrt_branch, sp_expansion

__all__ = [
    "ClassicalBranch",
    "BranchSearch",
    "HessianReport",
    "VanVleckResult",
    "MaslovError",
    "find_branches",
    "maslov_index",
    "caustic_index",
    "hessian_phi",
    "inverse_hessian_blocks",
    "flow_jets",
    "correction_coefficients",
    "vanvleck_kernel",
    "ehrenfest_diagnostics",
    "VanVleckPropagator",
]

log = logging.getLogger(__name__)


class MaslovError(RuntimeError):
    """The branch relation and the caustic count disagree, or the phase is off-lattice."""


@dataclass
class ClassicalBranch:
    """A trajectory from ``(y, eta)`` reaching ``x`` at time ``t``."""

    eta: np.ndarray
    traj: TrajectoryRecord
    action: float
    mixed_hessian: np.ndarray
    maslov: int
    cond_B: float
    x: np.ndarray
    y: np.ndarray
    residual: float = 0.0
    b_coeffs: Optional[list] = None
    model: Optional[HamiltonianModel] = field(default=None, repr=False)

    @property
    def amplitude(self) -> float:
        """``|det mixed_hessian|^{1/2}``."""
        return float(np.sqrt(abs(np.linalg.det(self.mixed_hessian))))


@dataclass
class HessianReport:
    """``E = (1/i) d^2 Phi`` at a branch, two inverses and two determinants."""

    E: np.ndarray
    inv_block: np.ndarray
    inv_solve: np.ndarray
    det_direct: complex
    det_factored: complex
    inv_error: float
    det_error: float


@dataclass
class VanVleckResult:
    """Kernel value with per-branch contributions."""

    value: complex
    no_classical_path: bool
    contributions: list
    order: int

    def __complex__(self):
        return complex(self.value)


@dataclass
class BranchSearch:
    """Roots and diagnostics returned by :func:`find_branches`."""

    branches: list
    degenerate: list
    discarded_starts: int
    r0: float

    def __iter__(self):
        return iter(self.branches)

    def __len__(self):
        return len(self.branches)

    def __getitem__(self, i):
        return self.branches[i]


# ---------------------------------------------------------------------------
# Hessian of the Herman-Kluk phase at a branch


def hessian_phi(traj: TrajectoryRecord, rtol: float = 1e-8) -> HessianReport:
    """``(1/i) d^2 Phi`` in ``z = (q, p)`` at ``x = q_t``, ``y = q``.

    The closed-form inverse uses ``Y_t``, ``Z_t`` and ``B_t^{-1}``; it is
    compared with a direct solve, and ``det`` with ``det(-M_t) det(B_t)``.
    When ``B_t`` is singular only the determinants are compared (both vanish)
    and the inverse fields are ``None``.  Raises ``AssertionError`` if a check
    fails at ``rtol``.
    """
    A, B, C, D = traj.A, traj.B, traj.C, traj.D
    d = A.shape[0]
    I = np.eye(d)
    top = np.hstack([(A + 1j * C).T @ A + I, (A + 1j * C).T @ B])
    bot = np.hstack([(B + 1j * D).T @ A - 1j * I, (B + 1j * D).T @ B])
    E = np.vstack([top, bot])
    det_direct = complex(np.linalg.det(E))
    det_fact = complex(np.linalg.det(-traj.M) * np.linalg.det(B))
    if _is_degenerate(B, d):
        det_err = abs(det_direct - det_fact) / max(1.0, np.abs(E).max()) ** (2 * d)
        inv_block = inv_solve = None
        inv_err = float("nan")
    else:
        det_err = abs(det_direct - det_fact) / abs(det_fact)
        inv_block = inverse_hessian_blocks(traj)
        inv_solve = np.linalg.solve(E, np.eye(2 * d))
        inv_err = float(np.abs(inv_block - inv_solve).max() / np.abs(inv_solve).max())
    rep = HessianReport(E, inv_block, inv_solve, det_direct, det_fact, inv_err, float(det_err))
    if inv_err > rtol or det_err > rtol:
        raise AssertionError(f"Hessian identities violated: inverse {inv_err:.2e}, det {det_err:.2e}")
    return rep


def inverse_hessian_blocks(traj: TrajectoryRecord) -> np.ndarray:
    """Closed-form inverse of ``(1/i) d^2 Phi`` from ``Y_t, Z_t, B_t^{-1}``."""
    A, B = traj.A, traj.B
    d = A.shape[0]
    I = np.eye(d)
    Y, Z = auxiliary_matrices(traj)
    Yis = np.linalg.inv(Y.conj().T)
    W = Z.T @ Yis
    Binv = np.linalg.inv(B)
    top = np.hstack([0.5 * (I - W), 0.5j * (I + W)])
    bot = np.hstack([Binv @ (Yis - 0.5 * A @ (I - W)), -1j * Binv @ (Yis + 0.5 * A @ (I + W))])
    return np.vstack([top, bot])


# ---------------------------------------------------------------------------
# Maslov index


def caustic_index(traj: TrajectoryRecord) -> int:
    """Index from the zeros of ``det B_s``: their count for t > 0, ``-d - count`` for t < 0."""
    count = int(sum(traj.caustic_multiplicities))
    return count if traj.t > 0 else -traj.dim - count


def maslov_index(traj: TrajectoryRecord, check: bool = True) -> int:
    """Integer ``theta`` of the branch relation at a regular endpoint.

    ``e^{-i pi theta/2} = i^d det^{1/2} M_t |det B_t|^{1/2} / det^{1/2} E`` with
    ``E = (1/i) d^2 Phi``; the continuous argument of ``det M_s`` removes the
    mod-4 ambiguity.  With ``check`` the result must equal :func:`caustic_index`.
    """
    d = traj.dim
    B = traj.B
    detB = np.linalg.det(B)
    if abs(detB) < 1e-10 * max(1.0, np.linalg.norm(B, 2)) ** d:
        raise MaslovError(f"endpoint caustic: |det B_t| = {abs(detB):.2e}")
    E = hessian_phi(traj, rtol=1e-6).E
    sq = det_sqrt_branch(E)
    raw = -(2 / np.pi) * (0.5 * np.pi * d + 0.5 * traj.branch_arg - np.angle(sq))
    theta = int(round(raw))
    if abs(raw - theta) * np.pi / 2 > 0.1:
        raise MaslovError(f"branch phase off the pi/2 lattice by {abs(raw - theta) * np.pi / 2:.3f} rad")
    if check and traj._dense is not None:
        other = caustic_index(traj)
        if other != theta:
            raise MaslovError(f"branch relation gives theta={theta}, caustic count gives {other}")
    return theta


# ---------------------------------------------------------------------------
# branch search


def _shoot(model, y, etas, t, tol):
    d = model.dim
    etas = np.atleast_2d(etas)
    z0 = np.hstack([np.broadcast_to(y, etas.shape), etas])
    batch = integrate_batch(model, z0, t, tol)
    F = batch.tangent
    return batch.zt[:, :d], F[:, :d, d:]


def _make_branch(model, t, x, y, eta, flow_tol):
    d = model.dim
    traj = integrate_flow(model, np.concatenate([y, eta]), t, flow_tol)
    Binv = np.linalg.inv(traj.B)
    return ClassicalBranch(
        eta=np.asarray(eta, dtype=float), traj=traj, action=traj.action, mixed_hessian=-Binv,
        maslov=maslov_index(traj), cond_B=float(np.linalg.norm(Binv, 2)), x=x.copy(), y=y.copy(),
        residual=float(np.abs(traj.zt.q - x).max()), model=model)


def _is_degenerate(B, d):
    return abs(np.linalg.det(B)) < 1e-10 * max(1.0, np.linalg.norm(B, 2)) ** d


def find_branches(model: HamiltonianModel, t: float, x, y, search_box, tol: float = 1e-10,
                  flow_tol: Optional[float] = None, n_scan: int = 401,
                  max_starts: int = 20000) -> BranchSearch:
    """All momenta ``eta`` in ``search_box`` with ``q_t(y, eta) = x``.

    In d = 1 a scan brackets sign changes of ``F = q_t - x`` (refining
    wherever ``B`` changes sign without ``F`` doing so), then each bracket is
    solved and polished by Newton with Jacobian ``B_t``.  In d > 1, damped
    Newton runs from a grid of starts with spacing ``r0`` and roots closer
    than ``r0`` are merged.  Branches come back sorted lexicographically.
    """
    d = model.dim
    x = as_vector(x, d, "x")
    y = as_vector(y, d, "y")
    tol = check_scalar(tol, "tol", min_val=0.0)
    box = np.asarray(search_box, dtype=float).reshape(-1, 2)
    if box.shape[0] == 1 and d > 1:
        box = np.repeat(box, d, axis=0)
    if box.shape != (d, 2) or np.any(box[:, 1] <= box[:, 0]) or not np.all(np.isfinite(box)):
        raise ValueError(f"search_box must give finite (lo, hi) per dimension, got {search_box}")
    flow_tol = flow_tol or min(1e-10, tol)
    if t == 0:
        raise ValueError("no branch structure at t = 0")
    r0 = _start_spacing(model, t, y, box, flow_tol)
    if d == 1:
        roots, degenerate, discarded = _scan_1d(model, t, x[0], y, box[0], tol, flow_tol, n_scan, r0)
    else:
        roots, degenerate, discarded = _newton_multistart(model, t, x, y, box, tol, flow_tol, r0,
                                                          max_starts)
    roots.sort(key=lambda e: tuple(e))
    branches = [_make_branch(model, t, x, y, eta, flow_tol) for eta in roots]
    return BranchSearch(branches, degenerate, discarded, r0)


def _start_spacing(model, t, y, box, flow_tol):
    """``min(R1 R2, box width)`` from sampled B_t and second differences of q_t."""
    d = model.dim
    rng = np.random.default_rng(12345)
    samples = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((8, d))
    h = 1e-3
    pts = [samples]
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        pts += [samples + e, samples - e]
    q, B = _shoot(model, y, np.concatenate(pts), t, flow_tol)
    n = samples.shape[0]
    q0 = q[:n]
    second = 0.0
    for i in range(d):
        qp, qm = q[n * (1 + 2 * i): n * (2 + 2 * i)], q[n * (2 + 2 * i): n * (3 + 2 * i)]
        second = max(second, float(np.abs(qp - 2 * q0 + qm).max() / h ** 2))
    binv = max(float(np.linalg.norm(np.linalg.pinv(b), 2)) for b in B[:n])
    R1 = 1.0 / max(binv, 1e-12)
    R2 = 1.0 / max(second, 1e-12)
    width = float(np.min(box[:, 1] - box[:, 0]))
    return float(min(R1 * R2, width))


def _illinois(fun, a, b, fa, fb, xtol, maxiter=200):
    """Batched Illinois (modified regula falsi) on brackets with ``fa * fb < 0``."""
    a, b, fa, fb = (np.array(v, dtype=float) for v in (a, b, fa, fb))
    for _ in range(maxiter):
        open_ = (np.abs(b - a) > xtol * np.maximum(1.0, np.abs(b))) & (fb != 0)
        if not open_.any():
            break
        c = np.where(open_, (a * fb - b * fa) / np.where(open_, fb - fa, 1.0), b)
        fc = fun(c[open_])
        fcf = fb.copy()
        fcf[open_] = fc
        swap = open_ & (fcf * fb < 0)
        keep = open_ & ~swap
        a = np.where(swap, b, a)
        fa = np.where(swap, fb, np.where(keep, 0.5 * fa, fa))
        b = np.where(open_, c, b)
        fb = np.where(open_, fcf, fb)
    return b


def _scan_1d(model, t, x, y, box, tol, flow_tol, n_scan, r0):
    lo, hi = box
    n = int(min(max(n_scan, np.ceil((hi - lo) / max(r0, 1e-12)) + 1), 20001))
    ps = np.linspace(lo, hi, n)

    def shoot(e):
        q, B = _shoot(model, y, np.asarray(e)[:, None], t, flow_tol)
        return q[:, 0] - x, B[:, 0, 0]

    F, b = shoot(ps)
    # split scan intervals at zeros of B so F is monotone on every piece
    flip = np.nonzero(b[:-1] * b[1:] < 0)[0]
    nodes, Fn = list(ps), list(F)
    if flip.size:
        zb = _illinois(lambda e: shoot(e)[1], ps[flip], ps[flip + 1], b[flip], b[flip + 1], 1e-13)
        Fz, _ = shoot(zb)
        nodes += list(zb)
        Fn += list(Fz)
    else:
        zb = np.empty(0)
    order = np.argsort(nodes)
    nodes, Fn = np.asarray(nodes)[order], np.asarray(Fn)[order]
    degenerate = []
    for e in zb:
        k = int(np.searchsorted(nodes, e))
        if abs(Fn[k]) <= max(1e3 * tol, 1e-8):
            degenerate.append(float(e))
            log.info("degenerate root near eta=%.6g excluded (B_t ~ 0)", e)
    exact = list(nodes[Fn == 0])
    br = np.nonzero(Fn[:-1] * Fn[1:] < 0)[0]
    roots = exact
    if br.size:
        roots += list(_illinois(lambda e: shoot(e)[0], nodes[br], nodes[br + 1], Fn[br], Fn[br + 1],
                                1e-15))
    roots = np.asarray(sorted(roots), dtype=float)
    discarded = 0
    out = []
    if roots.size:
        Fr, Br = shoot(roots)
        for _ in range(3):
            ok = np.abs(Br) > 0
            step = np.where(ok, Fr / np.where(ok, Br, 1.0), 0.0)
            cand = roots - step
            Fc, Bc = shoot(cand)
            better = np.abs(Fc) < np.abs(Fr)
            roots, Fr, Br = np.where(better, cand, roots), np.where(better, Fc, Fr), np.where(better, Bc, Br)
            if np.all(np.abs(Fr) <= 0.01 * tol):
                break
        for eta, res, bb in zip(roots, Fr, Br):
            if abs(res) > tol:
                discarded += 1
                log.info("root solve stagnated at eta=%.6g (|F|=%.2e), discarded", eta, res)
                continue
            if _is_degenerate(np.array([[bb]]), 1):
                if not any(abs(eta - e) < 1e-6 for e in degenerate):
                    degenerate.append(float(eta))
                continue
            if out and abs(eta - out[-1][0]) <= 1e-12 * max(1.0, abs(eta)):
                continue
            out.append(np.array([eta]))
    return out, degenerate, discarded


def _newton_multistart(model, t, x, y, box, tol, flow_tol, r0, max_starts):
    d = model.dim
    counts = [max(2, int(np.ceil((b1 - b0) / r0)) + 1) for b0, b1 in box]
    while np.prod(counts) > max_starts:
        counts = [max(2, c // 2) for c in counts]
    axes = [np.linspace(b0, b1, c) for (b0, b1), c in zip(box, counts)]
    starts = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)
    etas = starts.copy()
    active = np.ones(len(etas), dtype=bool)
    for _ in range(60):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        q, B = _shoot(model, y, etas[idx], t, flow_tol)
        F = q - x
        done = np.abs(F).max(axis=1) <= tol
        active[idx[done]] = False
        for j, k in enumerate(idx):
            if done[j]:
                continue
            try:
                step = np.linalg.solve(B[j], F[j])
            except np.linalg.LinAlgError:
                active[k] = False
                etas[k] = np.nan
                continue
            lam = min(1.0, r0 / max(np.abs(step).max(), 1e-300))
            etas[k] = etas[k] - lam * step
            if np.any(etas[k] < box[:, 0] - r0) or np.any(etas[k] > box[:, 1] + r0):
                active[k] = False
                etas[k] = np.nan
    ok = np.all(np.isfinite(etas), axis=1) & ~active
    discarded = int(len(etas) - ok.sum())
    cand = etas[ok]
    cand = cand[np.all((cand >= box[:, 0]) & (cand <= box[:, 1]), axis=1)]
    roots, degenerate = [], []
    if cand.size:
        q, B = _shoot(model, y, cand, t, flow_tol)
        for eta, qq, Bm in zip(cand, q, B):
            if np.abs(qq - x).max() > tol:
                continue
            if any(np.abs(eta - r).max() <= r0 for r in roots):
                continue
            if _is_degenerate(Bm, d):
                degenerate.append(eta)
                continue
            roots.append(eta)
    return roots, degenerate, discarded


# ---------------------------------------------------------------------------
# jets of the flow and correction coefficients


def flow_jets(model: HamiltonianModel, z0, t: float, order: int, tol: float = 1e-11) -> tuple:
    """Taylor jets in ``zeta = z - z0`` of ``q_t``, ``p_t`` and ``S_t``.

    The jets are propagated exactly (up to integration error) by evaluating
    the model's symbol on jets.  Models without a symbol fall back to
    least-squares fits of integrated trajectories.
    """
    d = model.dim
    z0 = np.asarray(z0, dtype=float)
    n = 2 * d
    shape = (order + 1,) * n
    size = int(np.prod(shape))
    if model.symbol is None:
        return _flow_jets_fit(model, z0, t, order, tol)

    def unpack(yv):
        parts = yv.reshape(2 * d + 1, *shape)
        return [Jet(parts[i], order) for i in range(2 * d + 1)]

    def rhs(s, yv):
        jets = unpack(yv)
        qs, ps = jets[:d], jets[d:2 * d]
        H, dq, dp = model.symbol(s, qs, ps)
        H = H if isinstance(H, Jet) else Jet.constant(H, n, order)
        dS = sum(p * g for p, g in zip(ps, dp)) - H
        out = [g for g in dp] + [-g for g in dq] + [dS]
        out = [o if isinstance(o, Jet) else Jet.constant(o, n, order) for o in out]
        return np.concatenate([o.coeffs.ravel() for o in out])

    init = [Jet.variable(i, n, order, z0[i]) for i in range(n)] + [Jet.zeros(n, order)]
    y0 = np.concatenate([j.coeffs.ravel() for j in init])
    sol = solve_ivp(rhs, (0.0, t), y0, method="DOP853", rtol=tol, atol=tol)
    if sol.status != 0:
        raise RuntimeError(f"jet propagation failed: {sol.message}")
    jets = unpack(sol.y[:, -1])
    return jets[:d], jets[d:2 * d], jets[2 * d]


def _flow_jets_fit(model, z0, t, order, tol):
    d = model.dim
    n = 2 * d
    step = 0.05
    pts_1d = step * np.arange(-order - 1, order + 2)
    grid = np.stack(np.meshgrid(*([pts_1d] * n), indexing="ij"), axis=-1).reshape(-1, n)
    grid = grid[np.linalg.norm(grid, axis=1) <= step * (order + 1) + 1e-15]
    batch = integrate_batch(model, z0 + grid, t, tol)
    table = {tuple(np.round(g / step).astype(int)): k for k, g in enumerate(grid)}
    out = []
    for comp in [*(batch.zt[:, i] for i in range(n)), batch.action]:
        lookup = lambda zeta, c=comp: c[table[tuple(np.round(np.asarray(zeta) / step).astype(int))]]
        out.append(Jet.from_callable(lookup, n, order, step=step))
    return out[:d], out[d:n], out[n]


def _det_jet(rows):
    m = len(rows)
    if m == 1:
        return rows[0][0]
    total = None
    for j in range(m):
        minor = [r[:j] + r[j + 1:] for r in rows[1:]]
        term = rows[0][j] * _det_jet(minor)
        term = term if j % 2 == 0 else -term
        total = term if total is None else total + term
    return total


def _hk_jets(branch: ClassicalBranch, order: int, hbar: float):
    """Phase and amplitude jets of the Herman-Kluk integrand at the branch point."""
    model = branch.model
    d = model.dim
    n = 2 * d
    z0 = np.concatenate([branch.y, branch.eta])
    qt, pt, S = flow_jets(model, z0, branch.traj.t, order + 1)
    x = branch.x
    zeta_q = [Jet.variable(i, n, order + 1) for i in range(d)]
    zeta_p = [Jet.variable(d + i, n, order + 1) for i in range(d)]
    phi = S
    for i in range(d):
        dx = x[i] - qt[i]
        phi = phi + pt[i] * dx + (branch.eta[i] + zeta_p[i]) * zeta_q[i] + 0.5j * (dx * dx + zeta_q[i] * zeta_q[i])
    # tangent-map jets lose one order
    Fq = [[qt[i].deriv(j) for j in range(n)] for i in range(d)]
    Fp = [[pt[i].deriv(j) for j in range(n)] for i in range(d)]
    M = [[Fp[i][j] - Fq[i][d + j] - 1j * (Fq[i][j] + Fp[i][d + j]) for j in range(d)] for i in range(d)]
    detM = _det_jet(M)
    amp = detM.sqrt(root=branch.traj.prefactor)
    amp = amp * (hk_normalization(d) * (2 * np.pi * hbar) ** (-1.5 * d))
    phi = phi.with_order(order)
    # the gradient vanishes at a root up to root and integration tolerance
    deg = np.indices(phi.coeffs.shape).sum(axis=0)
    lin = np.abs(phi.coeffs[deg == 1]).max()
    if lin > 1e-6 * max(1.0, np.abs(phi.coeffs).max()):
        raise RuntimeError(f"phase jet is not stationary at the branch (|grad| = {lin:.2e})")
    coeffs = phi.coeffs.copy()
    coeffs[deg == 1] = 0
    return Jet(coeffs, order), amp


def correction_coefficients(branch: ClassicalBranch, hbar: float, N: int) -> list:
    """``b_0 .. b_{N-1}`` of one branch from the stationary-phase expansion of the HK integral.

    ``b_0`` is 1 when the calibrated normalisation and the Maslov index are
    consistent; it is returned as computed so callers can check it.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    order = max(3, 2 * N)
    phi, amp = _hk_jets(branch, order, hbar)
    exp = sp_expansion(phi, amp.with_order(max(0, 2 * (N - 1))), hbar, N)
    lead = _leading(branch, hbar)
    return [complex(exp.terms[j] / (lead * hbar ** j)) for j in range(N)]


def _leading(branch: ClassicalBranch, hbar: float) -> complex:
    d = branch.x.size
    return complex((2j * np.pi * hbar) ** (-d / 2)
                   * np.exp(1j * branch.action / hbar - 0.5j * np.pi * branch.maslov) * branch.amplitude)


def vanvleck_kernel(branches: Sequence[ClassicalBranch], hbar: float, N: int = 1) -> VanVleckResult:
    """Van Vleck sum over branches, with ``N`` terms of the hbar series per branch."""
    hbar = check_scalar(hbar, "hbar", min_val=0.0)
    if N < 1:
        raise ValueError("N must be >= 1")
    branches = list(branches)
    if not branches:
        return VanVleckResult(0j, True, [], N)
    total = 0j
    contrib = []
    for br in branches:
        lead = _leading(br, hbar)
        if N == 1:
            br.b_coeffs = [1.0 + 0j]
            series = 1.0
        else:
            if br.model is None:
                raise ValueError("higher orders need the branch's model")
            b = correction_coefficients(br, hbar, N)
            b[0] = 1.0 + 0j
            br.b_coeffs = b
            series = sum(bk * hbar ** k for k, bk in enumerate(b))
        contrib.append(complex(lead * series))
        total += lead * series
    return VanVleckResult(complex(total), False, contrib, N)


def ehrenfest_diagnostics(branches: Sequence[ClassicalBranch], hbar: float, omega: float = 1.0) -> dict:
    """Exponents ``delta`` (from cond_B) and ``lambda`` (from omega) and the margin ``1 - 6 delta - 24 lambda``."""
    L = np.log(1 / hbar)
    cond = max([b.cond_B for b in branches], default=1.0)
    delta = max(0.0, float(np.log(max(cond, 1.0)) / L))
    lam = max(0.0, float(np.log(max(omega, 1.0)) / L))
    return {"cond_B": float(cond), "delta": delta, "lambda": lam,
            "ehrenfest_margin": 1.0 - (6 * delta + 24 * lam)}


class VanVleckPropagator(BaseEstimator):
    """Estimator-style Van Vleck kernel: ``predict`` maps rows ``(x, y)`` to kernel values.

    Parameters
    ----------
    model : HamiltonianModel
    t : float
    hbar : float
    search_box : sequence
        Momentum bounds for the branch search.
    order : int
        Number of terms ``N`` of the hbar series.
    tol : float
        Root tolerance.
    delta_budget : float, optional
        Warn when a branch has ``cond_B > hbar^{-delta_budget}``.
    """

    def __init__(self, model=None, t=1.0, hbar=0.1, search_box=(-5.0, 5.0), order=1, tol=1e-10,
                 delta_budget=None):
        self.model = model
        self.t = t
        self.hbar = hbar
        self.search_box = search_box
        self.order = order
        self.tol = tol
        self.delta_budget = delta_budget

    def fit(self, X=None, y=None):
        if self.model is None:
            raise ValueError("model must be set")
        check_scalar(self.hbar, "hbar", min_val=0.0)
        self.dim_ = self.model.dim
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "dim_")
        d = self.dim_
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != 2 * d:
            raise ValueError(f"rows must be (x, y) with {2 * d} entries")
        out = np.empty(X.shape[0], dtype=complex)
        self.results_ = []
        for i, row in enumerate(X):
            found = find_branches(self.model, self.t, row[:d], row[d:], self.search_box, self.tol)
            res = vanvleck_kernel(found.branches, self.hbar, self.order)
            if self.delta_budget is not None:
                for b in found.branches:
                    if b.cond_B > self.hbar ** (-self.delta_budget):
                        log.warning("cond_B=%.3g exceeds hbar^-delta budget at eta=%s", b.cond_B, b.eta)
            self.results_.append((found, res))
            out[i] = res.value
        return out
