"""Wave functions sampled on uniform position grids, and their text format.

File layout: a header line ``d hbar n_1..n_d origin_1..origin_d
spacing_1..spacing_d`` followed by ``n_1 * ... * n_d`` lines ``re im`` in
row-major (C) order.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = ["GridSpec", "WaveFunction", "BoundaryMassWarning", "gaussian_packet",
           "read_wavefunction", "write_wavefunction"]


class BoundaryMassWarning(UserWarning):
    """Wave mass near the edge of a periodic grid."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid ``origin + i * spacing``, ``i = 0..counts-1`` per axis."""

    origin: tuple
    spacing: tuple
    counts: tuple
    hbar: float

    def __post_init__(self):
        o = tuple(float(v) for v in np.atleast_1d(self.origin))
        s = tuple(float(v) for v in np.atleast_1d(self.spacing))
        c = tuple(int(v) for v in np.atleast_1d(self.counts))
        if not (len(o) == len(s) == len(c) >= 1):
            raise ValueError("origin, spacing and counts must have the same length >= 1")
        if min(c) < 2:
            raise ValueError(f"need at least 2 points per axis, got {c}")
        if not all(v > 0 and np.isfinite(v) for v in s):
            raise ValueError(f"spacing must be positive, got {s}")
        if not all(np.isfinite(o)):
            raise ValueError("origin must be finite")
        if not (np.isfinite(self.hbar) and self.hbar > 0):
            raise ValueError(f"hbar must be positive, got {self.hbar}")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "spacing", s)
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "hbar", float(self.hbar))

    @classmethod
    def from_bounds(cls, lo, hi, counts, hbar) -> "GridSpec":
        """Periodic grid of ``counts`` points on ``[lo, hi)`` per axis."""
        lo, hi = np.atleast_1d(lo).astype(float), np.atleast_1d(hi).astype(float)
        counts = np.broadcast_to(np.atleast_1d(counts), lo.shape)
        return cls(tuple(lo), tuple((hi - lo) / counts), tuple(counts), hbar)

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def lengths(self) -> np.ndarray:
        return np.array(self.spacing) * np.array(self.counts)

    def axes(self) -> list:
        return [o + s * np.arange(n) for o, s, n in zip(self.origin, self.spacing, self.counts)]

    def points(self) -> np.ndarray:
        """All grid points, shape ``(size, d)`` in row-major order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def wavenumbers(self) -> list:
        return [2 * np.pi * np.fft.fftfreq(n, s) for n, s in zip(self.counts, self.spacing)]

    def max_momentum(self) -> np.ndarray:
        """Nyquist momentum ``pi hbar / spacing`` per axis."""
        return np.pi * self.hbar / np.array(self.spacing)


@dataclass
class WaveFunction:
    """Complex samples of a wave function on a :class:`GridSpec`."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.size != self.grid.size:
            raise ValueError(f"{v.size} values for a grid of {self.grid.size} points")
        v = v.reshape(self.grid.counts)
        if not np.all(np.isfinite(v)):
            raise ValueError("wave function has non-finite values")
        self.values = v

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def hbar(self) -> float:
        return self.grid.hbar

    def norm(self) -> float:
        """L2 norm by the rectangle (periodic trapezoid) rule."""
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.cell_volume))

    def inner(self, other: "WaveFunction") -> complex:
        """``<self, other>``, antilinear in the first slot."""
        self._check_same_grid(other)
        return complex(np.sum(np.conj(self.values) * other.values) * self.grid.cell_volume)

    def distance(self, other: "WaveFunction") -> float:
        self._check_same_grid(other)
        return float(np.sqrt(np.sum(np.abs(self.values - other.values) ** 2) * self.grid.cell_volume))

    def relative_error(self, reference: "WaveFunction") -> float:
        return self.distance(reference) / reference.norm()

    def copy(self, values=None) -> "WaveFunction":
        return WaveFunction(self.grid, self.values.copy() if values is None else values)

    def boundary_mass(self, fraction: float = 0.05) -> float:
        """Relative mass in the outer ``fraction`` of the grid along any axis."""
        p = np.abs(self.values) ** 2
        total = p.sum()
        if total == 0:
            return 0.0
        mask = np.zeros(p.shape, dtype=bool)
        for ax, n in enumerate(self.grid.counts):
            m = max(1, int(round(fraction * n)))
            idx = np.arange(n)
            edge = (idx < m) | (idx >= n - m)
            shape = [1] * p.ndim
            shape[ax] = n
            mask |= edge.reshape(shape)
        return float(p[mask].sum() / total)

    def check_boundary(self, threshold: float = 1e-8) -> float:
        mass = self.boundary_mass()
        if mass > threshold:
            warnings.warn(f"relative mass {mass:.2e} near the grid boundary", BoundaryMassWarning,
                          stacklevel=2)
        return mass

    def momentum_tail(self, fraction: float = 0.1) -> float:
        """Relative spectral mass in the outer ``fraction`` of the discrete momenta."""
        spec = np.abs(np.fft.fftn(self.values)) ** 2
        total = spec.sum()
        if total == 0:
            return 0.0
        mask = np.zeros(spec.shape, dtype=bool)
        for ax, n in enumerate(self.grid.counts):
            f = np.abs(np.fft.fftfreq(n))
            edge = f > 0.5 * (1 - fraction)
            shape = [1] * spec.ndim
            shape[ax] = n
            mask |= edge.reshape(shape)
        return float(spec[mask].sum() / total)

    def _check_same_grid(self, other):
        if self.grid != other.grid:
            raise ValueError("wave functions live on different grids")

    def save(self, path) -> None:
        write_wavefunction(self, path)

    @classmethod
    def load(cls, path) -> "WaveFunction":
        return read_wavefunction(path)


def gaussian_packet(grid: GridSpec, q0, p0, width: float = 1.0) -> WaveFunction:
    """L2-normalised Gaussian ``exp(i p0.(x-q0)/hbar - |x-q0|^2 / (2 width hbar))``.

    ``width = 1`` is the coherent state used in the Herman-Kluk integrand.
    """
    d = grid.dim
    q0 = np.broadcast_to(np.asarray(q0, dtype=float), (d,))
    p0 = np.broadcast_to(np.asarray(p0, dtype=float), (d,))
    h = grid.hbar
    x = grid.points()
    dx = x - q0
    vals = (np.pi * width * h) ** (-d / 4) * np.exp(1j * dx @ p0 / h
                                                        - np.sum(dx * dx, axis=1) / (2 * width * h))
    return WaveFunction(grid, vals)


def write_wavefunction(psi: WaveFunction, path) -> None:
    g = psi.grid
    head = [str(g.dim), repr(float(g.hbar))] + [str(n) for n in g.counts]
    head += [repr(float(v)) for v in g.origin] + [repr(float(v)) for v in g.spacing]
    flat = psi.values.ravel()
    with open(path, "w") as fh:
        fh.write(" ".join(head) + "\n")
        for v in flat:
            fh.write(f"{float(v.real)!r} {float(v.imag)!r}\n")


def read_wavefunction(path) -> WaveFunction:
    with open(path) as fh:
        head = fh.readline().split()
        if not head:
            raise ValueError(f"{path}: empty file")
        d = int(head[0])
        if len(head) != 2 + 3 * d:
            raise ValueError(f"{path}: header has {len(head)} fields, expected {2 + 3 * d}")
        hbar = float(head[1])
        counts = tuple(int(v) for v in head[2:2 + d])
        origin = tuple(float(v) for v in head[2 + d:2 + 2 * d])
        spacing = tuple(float(v) for v in head[2 + 2 * d:2 + 3 * d])
        data = np.loadtxt(fh, ndmin=2)
    grid = GridSpec(origin, spacing, counts, hbar)
    if data.shape != (grid.size, 2):
        raise ValueError(f"{path}: expected {grid.size} lines 're im', got shape {data.shape}")
    return WaveFunction(grid, (data[:, 0] + 1j * data[:, 1]).reshape(counts))
