"""Reference propagators: closed-form kernels and a split-step Fourier solver.

The grid solver treats ``H = |p|^2/2 + V(q)`` on a periodic box with Strang
splitting; it is unitary up to rounding.  Kernel columns ``K_t(., y)`` are
extracted by propagating a band-limited delta at ``y`` whose momentum window
``W(p)`` is flat on a stated band and tapers smoothly to zero outside it.
Only classical branches whose initial momenta fall well inside the flat band
are represented faithfully, which is what :meth:`KernelColumn.certify` checks.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .wavefunction import BoundaryMassWarning, GridSpec, WaveFunction

__all__ = [
    "GridSpec",
    "NyquistError",
    "BandError",
    "KernelColumn",
    "free_kernel",
    "mehler_kernel",
    "hyperbolic_kernel",
    "free_gaussian",
    "harmonic_potential",
    "split_step_propagate",
    "kernel_column",
    "smooth_window",
]


class NyquistError(ValueError):
    """The grid does not resolve the momenta present in the wave function."""


class BandError(ValueError):
    """A comparison was requested outside a kernel column's certified band."""


def _sign_phase(s: np.ndarray, d: int) -> np.ndarray:
    # (i s)^{-d/2} with the branch continuous from s > 0
    return np.exp(-0.25j * np.pi * d * np.sign(s))


def free_kernel(t: float, x, y, hbar: float) -> complex:
    """``(2 pi i hbar t)^{-d/2} exp(i |x-y|^2 / (2 hbar t))``."""
    if t == 0:
        raise ValueError("free kernel is singular at t = 0")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    d = x.shape[-1] if x.ndim > 1 else x.size
    r2 = np.sum((x - y) ** 2, axis=-1) if x.ndim > 1 else float(np.sum((x - y) ** 2))
    amp = (2 * np.pi * hbar * abs(t)) ** (-d / 2) * _sign_phase(np.asarray(t), d)
    return amp * np.exp(1j * r2 / (2 * hbar * t))


def mehler_kernel(t: float, x, y, omega: float, hbar: float):
    """Harmonic-oscillator kernel in d = 1, valid for any t away from caustics.

    The Maslov factor ``exp(-i pi floor(omega t / pi) / 2)`` is folded in, so
    the result is continuous in t between caustics and matches the free
    kernel as ``t -> 0``.
    """
    s = np.sin(omega * t)
    if abs(s) < 1e-8:
        raise ValueError(f"caustic: |sin(omega t)| = {abs(s):.2e}")
    c = np.cos(omega * t)
    m = np.floor(omega * t / np.pi)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    amp = (2j * np.pi * hbar * abs(s) / omega) ** -0.5 * np.exp(-0.5j * np.pi * m)
    return amp * np.exp(1j * omega * ((x * x + y * y) * c - 2 * x * y) / (2 * hbar * s))


def hyperbolic_kernel(t: float, x, y, gamma: float, hbar: float):
    """Kernel of the inverted oscillator ``H = (p^2 - gamma^2 q^2)/2`` in d = 1."""
    if t == 0:
        raise ValueError("kernel is singular at t = 0")
    s = np.sinh(gamma * t)
    c = np.cosh(gamma * t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    amp = (2 * np.pi * hbar * abs(s) / gamma) ** -0.5 * _sign_phase(np.asarray(s), 1)
    return amp * np.exp(1j * gamma * ((x * x + y * y) * c - 2 * x * y) / (2 * hbar * s))


def free_gaussian(grid: GridSpec, q0, p0, t: float, width: float = 1.0) -> WaveFunction:
    """Exact free evolution of :func:`~semiprop.wavefunction.gaussian_packet`."""
    d = grid.dim
    h = grid.hbar
    q0 = np.broadcast_to(np.asarray(q0, dtype=float), (d,))
    p0 = np.broadcast_to(np.asarray(p0, dtype=float), (d,))
    x = grid.points()
    a = width + 1j * t
    dx = x - q0 - p0 * t
    phase = (x - q0) @ p0 - 0.5 * t * p0 @ p0
    vals = ((np.pi * width * h) ** (-d / 4) * (a / width) ** (-d / 2)
            * np.exp(1j * phase / h - np.sum(dx * dx, axis=1) / (2 * h * a)))
    return WaveFunction(grid, vals)


def harmonic_potential(omega: float = 1.0) -> Callable:
    return lambda *q: 0.5 * omega ** 2 * sum(qi * qi for qi in q)


def _check_resolution(psi: WaveFunction, where: str, strict: bool, tol: float = 1e-10):
    tail = psi.momentum_tail()
    if tail > tol:
        msg = f"{where}: relative spectral mass {tail:.2e} near the Nyquist momentum"
        if strict:
            raise NyquistError(msg)
        warnings.warn(msg, BoundaryMassWarning, stacklevel=3)
    mass = psi.boundary_mass()
    if mass > 1e-8:
        warnings.warn(f"{where}: relative mass {mass:.2e} near the grid boundary",
                      BoundaryMassWarning, stacklevel=3)


def split_step_propagate(V: Optional[Callable], psi0: WaveFunction, t: float, steps: int,
                         check: bool = True) -> WaveFunction:
    """Strang splitting ``e^{-iV dt/2h} e^{-i h |k|^2 dt/2} e^{-iV dt/2h}``, ``steps`` times.

    ``V`` is called with one coordinate array per axis (meshgrid, ``ij``
    indexing); ``None`` means ``V = 0``.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    grid = psi0.grid
    if grid.dim > 2:
        raise ValueError("grid solver supports d <= 2")
    if check:
        _check_resolution(psi0, "initial state", strict=True)
    h = grid.hbar
    dt = t / steps
    mesh = np.meshgrid(*grid.axes(), indexing="ij")
    k2 = sum(m ** 2 for m in np.meshgrid(*grid.wavenumbers(), indexing="ij"))
    kin = np.exp(-0.5j * h * k2 * dt)
    psi = psi0.values.copy()
    if V is None:
        psi = np.fft.ifftn(np.exp(-0.5j * h * k2 * t) * np.fft.fftn(psi))
    else:
        v = np.broadcast_to(np.asarray(V(*mesh), dtype=float), psi.shape)
        half = np.exp(-0.5j * v * dt / h)
        full = half * half
        psi *= half
        for n in range(steps):
            psi = np.fft.ifftn(kin * np.fft.fftn(psi))
            psi *= full if n < steps - 1 else half
    out = WaveFunction(grid, psi)
    if check:
        _check_resolution(out, "propagated state", strict=False)
    return out


def smooth_step(u: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for u <= 0, 1 for u >= 1."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
        b = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
    return a / (a + b)


def smooth_window(p: np.ndarray, lo: float, hi: float, taper: float) -> np.ndarray:
    """Equal to 1 on ``[lo, hi]``, 0 outside ``[lo - taper, hi + taper]``, smooth between."""
    p = np.asarray(p, dtype=float)
    return smooth_step((p - lo + taper) / taper) * smooth_step((hi + taper - p) / taper)


@dataclass
class KernelColumn:
    """Approximate kernel column ``x -> K_t(x, y)`` for d = 1.

    ``band`` is the flat part of the initial-momentum window and ``taper``
    the width of its smooth roll-off.
    """

    wave: WaveFunction
    y: float
    t: float
    band: tuple
    taper: float
    margin: float = field(default=0.0)

    def in_band(self, eta) -> np.ndarray:
        """True for momenta in the flat band at distance >= margin from its edges."""
        eta = np.asarray(eta, dtype=float)
        lo, hi = self.band
        return (eta >= lo + self.margin) & (eta <= hi - self.margin)

    def outside(self, eta) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        lo, hi = self.band
        return (eta <= lo - self.taper - self.margin) | (eta >= hi + self.taper + self.margin)

    def certify(self, etas) -> bool:
        """Whether a comparison against branches with these initial momenta is meaningful."""
        etas = np.atleast_1d(np.asarray(etas, dtype=float))
        return bool(np.all(self.in_band(etas) | self.outside(etas)))

    def value_at(self, x, etas=None):
        """Trigonometric interpolation of the column at ``x``.

        If ``etas`` (initial momenta of the classical branches ending at x) is
        given, raises :class:`BandError` unless they are certified.
        """
        if etas is not None and not self.certify(etas):
            raise BandError(f"branch momenta {np.round(etas, 4)} fall in the taper of band "
                            f"{self.band} (taper {self.taper}, margin {self.margin})")
        g = self.wave.grid
        x = np.atleast_1d(np.asarray(x, dtype=float))
        n = g.counts[0]
        coef = np.fft.fft(self.wave.values) / n
        k = g.wavenumbers()[0]
        if n % 2 == 0:
            coef = coef.copy()
            coef[n // 2] *= 0.5  # split the Nyquist mode symmetrically
            k = np.concatenate([k, [-k[n // 2]]])
            coef = np.concatenate([coef, [coef[n // 2]]])
        vals = np.exp(1j * np.outer(x - g.origin[0], k)) @ coef
        return vals if vals.size > 1 else complex(vals[0])


def kernel_column(V: Optional[Callable], t: float, y: float, grid: GridSpec, steps: int,
                  band: Optional[Sequence[float]] = None, taper: Optional[float] = None,
                  margin: Optional[float] = None) -> KernelColumn:
    """Propagate a band-limited delta at ``y`` to approximate ``K_t(., y)`` (d = 1).

    The initial state is ``(1/L) sum_k W(hbar k) e^{ik(x - y)}`` with the
    smooth window of :func:`smooth_window`.  Default band: the central 60% of
    the resolved momenta, taper 20% of the Nyquist momentum.
    """
    if grid.dim != 1:
        raise ValueError("kernel_column supports d = 1")
    h = grid.hbar
    pmax = float(grid.max_momentum()[0])
    if band is None:
        band = (-0.6 * pmax, 0.6 * pmax)
    lo, hi = float(band[0]), float(band[1])
    taper = 0.2 * pmax if taper is None else float(taper)
    if not (hi > lo and taper > 0):
        raise ValueError("band must satisfy lo < hi and taper > 0")
    if max(abs(lo - taper), abs(hi + taper)) >= pmax:
        raise NyquistError(f"window support [{lo - taper}, {hi + taper}] exceeds the grid "
                           f"momentum range +-{pmax:.4g}")
    margin = 3.0 * np.sqrt(h) if margin is None else float(margin)
    if hi - lo <= 2 * margin:
        raise BandError("deconvolution band is narrower than twice the certification margin")
    k = grid.wavenumbers()[0]
    W = smooth_window(h * k, lo, hi, taper)
    dx = grid.spacing[0]
    delta = np.fft.ifft(W * np.exp(-1j * k * (y - grid.origin[0]))) / dx
    psi0 = WaveFunction(grid, delta)
    with warnings.catch_warnings():
        # a delta is not localised; boundary mass is expected
        warnings.simplefilter("ignore", BoundaryMassWarning)
        wave = split_step_propagate(V, psi0, t, steps, check=False)
    return KernelColumn(wave, float(y), float(t), (lo, hi), taper, margin)
