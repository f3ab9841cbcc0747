"""Stationary-phase asymptotics for ``I(hbar) = int e^{i phi(x)/hbar} u(x) dx``.

Phase and amplitude enter as jets at a nondegenerate critical point placed at
the origin.  With ``H0 = d^2 phi(0)`` and the cubic remainder
``g(x) = phi(x) - phi(0) - H0 x.x / 2`` the expansion reads

    I ~ (2 pi hbar)^{n/2} e^{i phi(0)/hbar} det^{-1/2}(H0 / i) * sum_j hbar^j L_j u,
    L_j u = sum_{l - m = j, 2l >= 3m} i^{-j} 2^{-l} / (l! m!) <H0^{-1} D, D>^l (g^m u)(0),

with ``D = -i d/dx``.  The phases may depend on ``hbar`` (growth exponents
``mu, nu, sigma``); the caller then builds the jets at each ``hbar``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import quad_vec

from .jets import Jet, JetMismatchError, jet_arith

__all__ = [
    "Jet",
    "JetMismatchError",
    "jet_arith",
    "SpParameters",
    "SpExpansion",
    "OracleResult",
    "apply_quadratic_form_power",
    "build_g",
    "det_sqrt_branch",
    "sp_expansion",
    "oracle_quadrature",
    "validate_parameters",
    "required_orders",
]

ARG_SLACK = 1e-9


@dataclass(frozen=True)
class SpParameters:
    """Growth exponents of an hbar-dependent phase family."""

    mu: float
    nu: float
    sigma: float
    rho: float
    exponent_gain: float


@dataclass
class SpExpansion:
    """Terms ``hbar^j L_j u`` (prefactor included) and their partial sums."""

    terms: list
    partial_sums: list
    prefactor: complex
    predicted_error_exponent: float
    hbar: float = float("nan")
    params: Optional[SpParameters] = None

    @property
    def value(self) -> complex:
        return self.partial_sums[-1]


@dataclass
class OracleResult:
    """Quadrature value with the achieved error estimate."""

    value: complex
    error: float
    converged: bool
    neval: int = 0

    def __complex__(self):
        return complex(self.value)


def validate_parameters(mu: float, nu: float, sigma: float) -> SpParameters:
    """Check ``1 - 5 mu - 6 sigma - 2 nu > 0`` and return the derived exponents.

    >>> validate_parameters(0.0, 0.0, 0.0).exponent_gain
    1.0
    """
    vals = {"mu": mu, "nu": nu, "sigma": sigma}
    for name, v in vals.items():
        if not np.isfinite(v) or v < 0:
            raise ValueError(f"{name} must be a finite nonnegative number, got {v}")
    gain = 1.0 - 5.0 * mu - 6.0 * sigma - 2.0 * nu
    if gain <= 0:
        raise ValueError(
            f"1 - 5*mu - 6*sigma - 2*nu = 1 - {5 * mu:g} - {6 * sigma:g} - {2 * nu:g} = {gain:g} "
            "must be > 0")
    return SpParameters(float(mu), float(nu), float(sigma), float(sigma + nu + mu), float(gain))


def apply_quadratic_form_power(Ainv, f: Jet, ell: int) -> Jet:
    """Apply ``(sum_ab Ainv_ab D_a D_b)^ell`` to a jet, ``D = -i d``.

    Each application lowers the jet order by two.
    """
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    if f.order < 2 * ell:
        raise ValueError(f"jet of order {f.order} is too short for ell={ell} (needs {2 * ell})")
    Ainv = np.atleast_2d(np.asarray(Ainv))
    n = f.dim
    if Ainv.shape != (n, n):
        raise ValueError(f"Ainv must be {n}x{n}, got {Ainv.shape}")
    out = f
    for _ in range(ell):
        acc = None
        first = [out.deriv(a) for a in range(n)]
        for a in range(n):
            for b in range(n):
                c = Ainv[a, b]
                if c == 0:
                    continue
                term = first[a].deriv(b) * (-c)
                acc = term if acc is None else acc + term
        out = acc if acc is not None else Jet.zeros(n, out.order - 2)
    return out


def build_g(phase: Jet, linear_tol: float = 1e-10) -> Jet:
    """Cubic-and-higher remainder ``phi - phi(0) - H0 x.x / 2`` of a phase jet."""
    if phase.order < 3:
        raise ValueError(f"phase jet order {phase.order} < 3")
    scale = max(1.0, float(np.abs(phase.coeffs).max()))
    deg = np.indices(phase.coeffs.shape).sum(axis=0)
    lin = np.abs(phase.coeffs[deg == 1]).max() if phase.dim else 0.0
    if lin > linear_tol * scale:
        raise ValueError(f"phase has a nonzero gradient at the origin (max |d phi| = {lin:.3e})")
    g = phase.coeffs.copy()
    g[deg <= 2] = 0
    return Jet(g, phase.order)


def hessian_of_jet(phase: Jet) -> np.ndarray:
    """Second-derivative matrix at the origin read off the degree-2 coefficients."""
    n = phase.dim
    H = np.zeros((n, n), dtype=phase.coeffs.dtype)
    for a in range(n):
        for b in range(n):
            alpha = [0] * n
            alpha[a] += 1
            alpha[b] += 1
            H[a, b] = phase[tuple(alpha)]
    # coefficient of x_a^2 is H_aa / 2, of x_a x_b (a != b) is H_ab
    H[np.diag_indices(n)] *= 2
    return H


def det_sqrt_branch(E) -> complex:
    """Square root of ``det E`` continuous on ``{Re E > 0}``, positive for real E > 0.

    Computed as the product of principal square roots of the eigenvalues.
    """
    E = np.atleast_2d(np.asarray(E, dtype=complex))
    if E.shape[0] != E.shape[1]:
        raise ValueError("E must be square")
    lam = np.linalg.eigvals(E)
    args = np.angle(lam)
    if lam.size and (np.any(lam == 0) or np.abs(args).max() > np.pi / 2 + ARG_SLACK):
        raise ValueError(f"eigenvalue argument outside [-pi/2, pi/2]: {args}")
    return complex(np.prod(np.sqrt(np.abs(lam)) * np.exp(0.5j * args)))


def required_orders(k: int) -> tuple[int, int]:
    """Minimal (phase, amplitude) jet orders for ``k`` terms."""
    return max(3, 2 * k), max(0, 2 * (k - 1))


def sp_expansion(phase: Jet, amplitude: Jet, hbar: float, k: int,
                 params: Optional[SpParameters] = None) -> SpExpansion:
    """First ``k`` terms (``j = 0..k-1``) of the stationary-phase expansion.

    Term ``j`` needs Taylor data of the phase up to degree ``2j + 2`` and of
    the amplitude up to degree ``2j``; :func:`required_orders` gives the
    minimal jet orders.  Products ``g^m u`` are formed at order ``6(k-1)``.

    >>> x = Jet.variable(0, 1, 3)
    >>> e = sp_expansion(0.5 * x * x, Jet.constant(1.0, 1, 3), 0.01, 1)
    >>> abs(e.terms[0] - np.sqrt(2 * np.pi * 0.01) * np.exp(1j * np.pi / 4)) < 1e-14
    True
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not hbar > 0:
        raise ValueError("hbar must be positive")
    if phase.dim != amplitude.dim:
        raise JetMismatchError("phase and amplitude jets have different dimension")
    need_p, need_u = required_orders(k)
    if phase.order < need_p or amplitude.order < need_u:
        raise ValueError(f"insufficient jet order for k={k}: need phase >= {need_p}, "
                         f"amplitude >= {need_u}; got {phase.order}, {amplitude.order}")
    n = phase.dim
    phi0 = complex(phase.value)
    if phi0.imag < -1e-12:
        raise ValueError(f"Im phi(0) = {phi0.imag:.3e} is negative")
    H0 = hessian_of_jet(phase)
    if np.linalg.cond(H0) > 1e14:
        raise ValueError("Hessian of the phase at the critical point is singular")
    Hinv = np.linalg.inv(H0)
    g = build_g(phase)
    has_g = bool(np.any(g.coeffs != 0))
    K = max(6 * (k - 1), 2 * (k - 1)) if has_g else 2 * (k - 1)
    g = g.with_order(K) if has_g else None
    u = amplitude.with_order(K)
    if np.iscomplexobj(phase.coeffs) and g is not None:
        g = Jet(g.coeffs.astype(complex), K)

    pref = (2 * np.pi * hbar) ** (n / 2) * np.exp(1j * phi0 / hbar) / det_sqrt_branch(H0 / 1j)
    gm = [u]  # g^m u
    terms = []
    for j in range(k):
        total = 0.0 + 0.0j
        for m in range(0, 2 * j + 1):
            if m > 0 and g is None:
                break
            while len(gm) <= m:
                gm.append(gm[-1] * g)
            ell = j + m
            if 2 * ell < 3 * m or 2 * ell > K:
                continue
            # only the degree-2l part of g^m u survives evaluation at 0
            val = apply_quadratic_form_power(Hinv, gm[m], ell).value
            total += (1j ** (-j)) * 2.0 ** (-ell) / (math.factorial(ell) * math.factorial(m)) * val
        terms.append(complex(pref * hbar ** j * total))
    partial = list(np.cumsum(terms))
    exps = params if params is not None else validate_parameters(0.0, 0.0, 0.0)
    predicted = k * exps.exponent_gain + exps.rho * n
    return SpExpansion(terms, [complex(s) for s in partial], complex(pref), float(predicted),
                       float(hbar), params)


def _breakpoints(phase_fn, a, b, hbar, per_wave=8, n_probe=4001, nodes_per_cell=15):
    """Cell edges so that each GK15 cell carries >= per_wave nodes per wavelength."""
    x = np.linspace(a, b, n_probe)
    ph = np.real(np.array([phase_fn(xi) for xi in x]))
    slope = np.abs(np.gradient(ph, x)).max()
    if slope == 0:
        return np.array([])
    wavelength = 2 * np.pi * hbar / slope
    width = nodes_per_cell * wavelength / per_wave
    n = int(np.ceil((b - a) / width))
    return np.linspace(a, b, n + 1)[1:-1] if n > 1 else np.array([])


def oracle_quadrature(phase_fn: Callable, amplitude_fn: Callable, hbar: float,
                      domain: Sequence[Sequence[float]], tol: float = 1e-10,
                      limit: int = 20000) -> OracleResult:
    """Adaptive Gauss-Kronrod (7, 15) quadrature of ``e^{i phi/hbar} u`` over a box.

    ``domain`` is a list of ``(lo, hi)`` pairs, one per dimension (1 or 2).
    The callables take one float per coordinate.  The initial cells resolve
    the local wavelength ``2 pi hbar / |d phi|``; refinement is handled by
    :func:`scipy.integrate.quad_vec`.
    """
    domain = [tuple(map(float, ab)) for ab in domain]
    n = len(domain)
    if n not in (1, 2):
        raise ValueError("oracle_quadrature supports n = 1 or 2")
    if not hbar > 0 or not tol > 0:
        raise ValueError("hbar and tol must be positive")
    for lo, hi in domain:
        if not hi > lo:
            raise ValueError(f"empty interval ({lo}, {hi})")
    vol = float(np.prod([hi - lo for lo, hi in domain]))

    def integrand(*x):
        ph = phase_fn(*x)
        if np.imag(ph) < -1e-12:
            raise ValueError(f"Im phase < 0 at {x}")
        return np.exp(1j * ph / hbar) * amplitude_fn(*x)

    # a priori magnitude for the absolute tolerance
    probe = [np.linspace(lo, hi, 65) for lo, hi in domain]
    mesh = np.stack(np.meshgrid(*probe, indexing="ij"), axis=-1).reshape(-1, n)
    scale = vol * max(1e-300, max(abs(integrand(*pt)) for pt in mesh))
    epsabs = 1e-3 * tol * scale

    if n == 1:
        (a, b), = domain
        pts = _breakpoints(phase_fn, a, b, hbar)
        val, err, info = quad_vec(integrand, a, b, epsabs=epsabs, epsrel=tol, points=pts,
                                  quadrature="gk15", limit=limit, full_output=True)
        return OracleResult(complex(val), float(err), bool(info.success), int(info.neval))

    (a, b), (c, d) = domain
    neval = [0]
    ok = [True]
    mid_c = 0.5 * (c + d)
    xpts = _breakpoints(lambda x: phase_fn(x, mid_c), a, b, hbar)

    def inner(x):
        ypts = _breakpoints(lambda y: phase_fn(x, y), c, d, hbar, n_probe=257)
        v, _, inf = quad_vec(lambda y: integrand(x, y), c, d, epsabs=epsabs / (b - a) * 1e-2,
                             epsrel=tol * 1e-2, points=ypts, quadrature="gk15", limit=limit,
                             full_output=True)
        neval[0] += inf.neval
        ok[0] &= bool(inf.success)
        return v

    val, err, info = quad_vec(inner, a, b, epsabs=epsabs, epsrel=tol, points=xpts,
                              quadrature="gk15", limit=limit, full_output=True)
    return OracleResult(complex(val), float(err), bool(info.success and ok[0]), neval[0])
