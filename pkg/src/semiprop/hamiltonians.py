"""Classical Hamiltonians on phase space ``z = (q, p)``.

Every model exposes ``eval``, ``grad`` and ``hess`` acting on arrays whose
last axis has length ``2d`` (a single point or a batch).  Gradients are
ordered ``(dH/dq, dH/dp)``.  Builtin models also carry a *symbol*: a function
of ``(t, qs, ps)`` written with plain arithmetic, so it can be evaluated on
:class:`~semiprop.jets.Jet` components to propagate Taylor jets of the flow.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._validation import check_finite_params, check_phase_array

__all__ = [
    "PhasePoint",
    "HamiltonianModel",
    "GradientReport",
    "builtin_model",
    "check_gradients",
    "BUILTIN_MODELS",
]


@dataclass(frozen=True)
class PhasePoint:
    """A point ``(q, p)`` of ``T^*R^d``."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        if q.ndim != 1 or q.shape != p.shape or q.size < 1:
            raise ValueError(f"q and p must be vectors of equal length >= 1, got {q.shape}, {p.shape}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError("phase point has non-finite entries")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def dim(self) -> int:
        return self.q.size

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    @classmethod
    def from_z(cls, z) -> "PhasePoint":
        z = np.asarray(z, dtype=float).ravel()
        if z.size % 2:
            raise ValueError("phase-space vector must have even length")
        d = z.size // 2
        return cls(z[:d], z[d:])


# symbol(t, qs, ps) -> (H, dH/dq list, dH/dp list); qs/ps are sequences of
# per-component values (ndarrays or Jets).
Symbol = Callable[[float, Sequence, Sequence], tuple]


@dataclass
class HamiltonianModel:
    """A (possibly time-dependent) classical Hamiltonian.

    ``eval(t, z)``, ``grad(t, z)`` and ``hess(t, z)`` accept ``z`` of shape
    ``(..., 2*dim)``.  ``subquad_bound`` is an upper bound on the operator
    norm of the Hessian when one is known.
    """

    dim: int
    name: str
    eval: Callable[[float, np.ndarray], np.ndarray]
    grad: Callable[[float, np.ndarray], np.ndarray]
    hess: Callable[[float, np.ndarray], np.ndarray]
    subquad_bound: Optional[float] = None
    params: tuple = ()
    symbol: Optional[Symbol] = field(default=None, repr=False)
    # True when hess does not depend on z (quadratic H)
    quadratic: bool = False

    def split(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z = check_phase_array(z, self.dim)
        return z[..., : self.dim], z[..., self.dim:]


def _components(z: np.ndarray, d: int) -> tuple[list, list]:
    return [z[..., i] for i in range(d)], [z[..., d + i] for i in range(d)]


def _model_from_symbol(name, d, symbol, hess, *, params, subquad_bound, quadratic):
    def eval_(t, z):
        z = check_phase_array(z, d)
        qs, ps = _components(z, d)
        return np.asarray(symbol(t, qs, ps)[0], dtype=float)

    def grad(t, z):
        z = check_phase_array(z, d)
        qs, ps = _components(z, d)
        _, dq, dp = symbol(t, qs, ps)
        parts = [np.broadcast_to(np.asarray(c, dtype=float), z.shape[:-1]) for c in (*dq, *dp)]
        return np.stack(parts, axis=-1)

    def hess_(t, z):
        z = check_phase_array(z, d)
        return hess(t, z)

    return HamiltonianModel(d, name, eval_, grad, hess_, subquad_bound=subquad_bound,
                            params=tuple(params), symbol=symbol, quadratic=quadratic)


def _diag_quadratic_hess(qcoef: np.ndarray, d: int):
    h = np.zeros((2 * d, 2 * d))
    h[np.arange(d), np.arange(d)] = qcoef
    h[np.arange(d, 2 * d), np.arange(d, 2 * d)] = 1.0

    def hess(t, z):
        return np.broadcast_to(h, z.shape[:-1] + h.shape).copy()

    return hess


def _free(params):
    d = int(params[0]) if params else 1
    if d < 1 or (params and params[0] != d):
        raise ValueError("free model takes an optional integer dimension")

    def symbol(t, qs, ps):
        H = 0.5 * sum(p * p for p in ps)
        return H, [0.0 * q for q in qs], list(ps)

    return _model_from_symbol("free", d, symbol, _diag_quadratic_hess(np.zeros(d), d),
                              params=params, subquad_bound=1.0, quadratic=True)


def _harmonic(params, sign, name):
    w = np.asarray(params, dtype=float)
    if w.size == 0:
        raise ValueError(f"{name} needs at least one frequency")
    d = w.size
    k = sign * w ** 2

    def symbol(t, qs, ps):
        H = 0.5 * sum(p * p for p in ps) + 0.5 * sum(ki * q * q for ki, q in zip(k, qs))
        return H, [ki * q for ki, q in zip(k, qs)], list(ps)

    return _model_from_symbol(name, d, symbol, _diag_quadratic_hess(k, d), params=params,
                              subquad_bound=float(max(1.0, np.max(np.abs(k)))), quadratic=True)


def _quartic(params):
    if not 1 <= len(params) <= 2:
        raise ValueError("quartic takes (lambda,) or (lambda, dim)")
    lam = float(params[0])
    d = int(params[1]) if len(params) == 2 else 1
    if d < 1:
        raise ValueError("quartic dimension must be >= 1")

    def symbol(t, qs, ps):
        r = sum(q * q for q in qs)
        H = 0.5 * sum(p * p for p in ps) + 0.5 * r + lam * r * r
        return H, [q + 4.0 * lam * r * q for q in qs], list(ps)

    def hess(t, z):
        q = z[..., :d]
        r = np.sum(q * q, axis=-1)
        out = np.zeros(z.shape[:-1] + (2 * d, 2 * d))
        out[..., :d, :d] = ((1.0 + 4.0 * lam * r)[..., None, None] * np.eye(d)
                            + 8.0 * lam * q[..., :, None] * q[..., None, :])
        out[..., d:, d:] = np.eye(d)
        return out

    return _model_from_symbol("quartic", d, symbol, hess, params=params,
                              subquad_bound=None, quadratic=False)


BUILTIN_MODELS = {
    "free": _free,
    "harmonic": lambda params: _harmonic(params, 1.0, "harmonic"),
    "inverted_harmonic": lambda params: _harmonic(params, -1.0, "inverted_harmonic"),
    "quartic": _quartic,
}


def builtin_model(name: str, params: Sequence[float] = ()) -> HamiltonianModel:
    """Return one of the builtin test Hamiltonians.

    ``harmonic`` and ``inverted_harmonic`` take one frequency per dimension;
    ``quartic`` takes ``(lambda,)`` or ``(lambda, d)``; ``free`` takes an
    optional dimension.

    >>> builtin_model("harmonic", [1.0]).eval(0.0, [1.0, 0.0])
    array(0.5)
    """
    if name not in BUILTIN_MODELS:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(BUILTIN_MODELS)}")
    params = check_finite_params(params)
    return BUILTIN_MODELS[name](params)


@dataclass
class GradientReport:
    """Result of :func:`check_gradients`."""

    max_grad_dev: np.ndarray
    max_hess_dev: np.ndarray
    max_sym_dev: float
    tol: float
    flagged: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.flagged

    @property
    def max_deviation(self) -> float:
        return float(max(self.max_grad_dev.max(), self.max_hess_dev.max()))


def check_gradients(model: HamiltonianModel, samples: Sequence, tol: float = 1e-5,
                    t: float = 0.0) -> GradientReport:
    """Compare ``grad``/``hess`` with central finite differences.

    Deviations are relative, ``|fd - exact| / max(1, |exact|)``, maximised
    entrywise over the samples.  Entries above ``tol`` are listed in
    ``flagged`` as ``("grad", i)`` or ``("hess", i, j)``; nothing is raised.
    """
    pts = [s.z if isinstance(s, PhasePoint) else np.asarray(s, dtype=float) for s in samples]
    if not pts:
        raise ValueError("check_gradients needs at least one sample")
    n = 2 * model.dim
    gdev = np.zeros(n)
    hdev = np.zeros((n, n))
    sym = 0.0
    for z in pts:
        z = check_phase_array(z, model.dim)
        g = model.grad(t, z)
        h = model.hess(t, z)
        sym = max(sym, float(np.abs(h - h.T).max()))
        for i in range(n):
            step = 1e-5 * max(1.0, abs(z[i]))
            e = np.zeros(n)
            e[i] = step
            fd_g = (model.eval(t, z + e) - model.eval(t, z - e)) / (2 * step)
            gdev[i] = max(gdev[i], abs(fd_g - g[i]) / max(1.0, abs(g[i])))
            fd_h = (model.grad(t, z + e) - model.grad(t, z - e)) / (2 * step)
            hdev[:, i] = np.maximum(hdev[:, i], np.abs(fd_h - h[:, i]) / np.maximum(1.0, np.abs(h[:, i])))
    flagged = [("grad", i) for i in range(n) if gdev[i] > tol]
    flagged += [("hess", i, j) for i in range(n) for j in range(n) if hdev[i, j] > tol]
    return GradientReport(gdev, hdev, sym, tol, flagged)
