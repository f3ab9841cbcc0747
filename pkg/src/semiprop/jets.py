"""Truncated multivariate Taylor polynomials ("jets").

A :class:`Jet` in ``n`` variables of order ``K`` stores the Taylor
coefficients ``f_alpha = d^alpha f(0) / alpha!`` for all multi-indices with
``|alpha| <= K`` in a dense array of shape ``(K + 1,) * n``.  Entries of total
degree above ``K`` are kept at exactly zero, so arithmetic is a truncated
polynomial algebra.  Jets support ``+ - * /`` with scalars and other jets of
the same shape, which lets the Hamiltonian symbols in
:mod:`semiprop.hamiltonians` run unchanged on jets.
"""
from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable, Iterable, Mapping

import numpy as np

__all__ = ["Jet", "JetMismatchError", "jet_arith"]


class JetMismatchError(ValueError):
    """Raised when two jets with different dimension or order are combined."""


@lru_cache(maxsize=None)
def _degree_grid(n: int, order: int) -> np.ndarray:
    if n == 0:
        return np.zeros((), dtype=int)
    return np.indices((order + 1,) * n).sum(axis=0)


@lru_cache(maxsize=None)
def _multi_indices(n: int, order: int) -> tuple[tuple[int, ...], ...]:
    deg = _degree_grid(n, order)
    idx = np.argwhere(deg <= order)
    return tuple(tuple(int(v) for v in row) for row in idx)


class Jet:
    """Truncated Taylor polynomial at the origin.

    Parameters
    ----------
    coeffs : array_like
        Dense coefficient array of shape ``(order + 1,) * n``.
    order : int
        Maximal total degree ``K``.
    """

    __slots__ = ("coeffs", "order")
    __array_priority__ = 1000  # numpy scalars defer to Jet operators

    def __init__(self, coeffs, order: int):
        coeffs = np.array(coeffs)
        if coeffs.dtype.kind not in "fc":
            coeffs = coeffs.astype(float)
        if coeffs.shape != (order + 1,) * coeffs.ndim:
            raise ValueError(f"coefficient array shape {coeffs.shape} does not match order {order}")
        coeffs = coeffs.copy()
        coeffs[_degree_grid(coeffs.ndim, order) > order] = 0
        self.coeffs = coeffs
        self.order = int(order)

    # -- construction -----------------------------------------------------
    @classmethod
    def zeros(cls, dim: int, order: int, dtype=float) -> "Jet":
        return cls(np.zeros((order + 1,) * dim, dtype=dtype), order)

    @classmethod
    def constant(cls, value, dim: int, order: int) -> "Jet":
        dtype = complex if np.iscomplexobj(value) else float
        out = cls.zeros(dim, order, dtype)
        out.coeffs[(0,) * dim] = value
        return out

    @classmethod
    def variable(cls, index: int, dim: int, order: int, value=0.0) -> "Jet":
        """The jet of ``x -> value + x[index]``."""
        out = cls.constant(value, dim, order)
        if order >= 1:
            alpha = [0] * dim
            alpha[index] = 1
            out.coeffs[tuple(alpha)] = 1.0
        return out

    @classmethod
    def from_dict(cls, terms: Mapping[tuple[int, ...], complex], dim: int, order: int) -> "Jet":
        dtype = complex if any(np.iscomplexobj(v) for v in terms.values()) else float
        out = cls.zeros(dim, order, dtype)
        for alpha, value in terms.items():
            if len(alpha) != dim:
                raise ValueError(f"multi-index {alpha} has wrong length for dim={dim}")
            if sum(alpha) <= order:
                out.coeffs[tuple(alpha)] = value
        return out

    @classmethod
    def from_callable(cls, f: Callable[[np.ndarray], complex], dim: int, order: int,
                      step: float = 0.05) -> "Jet":
        """Approximate jet of a callable by least-squares polynomial fitting.

        Helper only; closed-form jets should be preferred where available.
        """
        pts_1d = step * np.arange(-order - 1, order + 2)
        grid = np.stack(np.meshgrid(*([pts_1d] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
        grid = grid[np.linalg.norm(grid, axis=1) <= step * (order + 1) + 1e-15]
        alphas = _multi_indices(dim, order)
        vander = np.stack([np.prod(grid ** np.array(a), axis=1) for a in alphas], axis=1)
        values = np.array([f(x) for x in grid])
        sol, *_ = np.linalg.lstsq(vander, values, rcond=None)
        return cls.from_dict(dict(zip(alphas, sol)), dim, order)

    # -- basic properties -------------------------------------------------
    @property
    def dim(self) -> int:
        return self.coeffs.ndim

    @property
    def value(self):
        """Constant term, i.e. f(0)."""
        return self.coeffs[(0,) * self.dim][()]

    def __getitem__(self, alpha: tuple[int, ...]):
        if sum(alpha) > self.order:
            return 0.0
        return self.coeffs[tuple(alpha)]

    def items(self) -> Iterable[tuple[tuple[int, ...], complex]]:
        for alpha in _multi_indices(self.dim, self.order):
            c = self.coeffs[alpha]
            if c != 0:
                yield alpha, c

    def min_degree(self) -> int:
        """Lowest total degree carrying a nonzero coefficient (order + 1 if zero)."""
        deg = _degree_grid(self.dim, self.order)
        nz = deg[self.coeffs != 0]
        return int(nz.min()) if nz.size else self.order + 1

    def copy(self) -> "Jet":
        return Jet(self.coeffs, self.order)

    def with_order(self, order: int) -> "Jet":
        """Truncate or zero-pad to a new order."""
        new = np.zeros((order + 1,) * self.dim, dtype=self.coeffs.dtype)
        m = min(order, self.order) + 1
        sl = (slice(0, m),) * self.dim
        new[sl] = self.coeffs[sl]
        return Jet(new, order)

    def __call__(self, x) -> complex:
        x = np.asarray(x, dtype=float).reshape(self.dim)
        total = 0.0
        for alpha, c in self.items():
            total = total + c * np.prod(x ** np.array(alpha))
        return total

    def allclose(self, other: "Jet", rtol: float = 1e-12, atol: float = 1e-12) -> bool:
        _check_compatible(self, other)
        return bool(np.allclose(self.coeffs, other.coeffs, rtol=rtol, atol=atol))

    def __repr__(self) -> str:
        terms = ", ".join(f"{a}: {c:.6g}" for a, c in self.items())
        return f"Jet(dim={self.dim}, order={self.order}, {{{terms}}})"

    # -- arithmetic -------------------------------------------------------
    def _coerce(self, other) -> "Jet":
        if isinstance(other, Jet):
            _check_compatible(self, other)
            return other
        if np.ndim(other) != 0:
            return NotImplemented
        return Jet.constant(other, self.dim, self.order)

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return Jet(self.coeffs + other.coeffs, self.order)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coeffs, self.order)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return Jet(self.coeffs - other.coeffs, self.order)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return Jet(other.coeffs - self.coeffs, self.order)

    def __mul__(self, other):
        if not isinstance(other, Jet):
            if np.ndim(other) != 0:
                return NotImplemented
            return Jet(self.coeffs * other, self.order)
        _check_compatible(self, other)
        return Jet(_truncated_product(self.coeffs, other.coeffs, self.order), self.order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        if np.ndim(other) != 0:
            return NotImplemented
        return Jet(self.coeffs / other, self.order)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, k):
        if isinstance(k, (int, np.integer)) and k >= 0:
            out = Jet.constant(1.0, self.dim, self.order)
            base = self
            while k:
                if k & 1:
                    out = out * base
                k >>= 1
                if k:
                    base = base * base
            return out
        return self.power(float(k))

    # -- calculus ---------------------------------------------------------
    def deriv(self, index: int) -> "Jet":
        """Partial derivative in variable ``index``; the order drops by one."""
        if self.order == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        K = self.order
        sl = [slice(0, K)] * self.dim
        sl[index] = slice(1, K + 1)
        shape = [1] * self.dim
        shape[index] = K
        factor = np.arange(1, K + 1).reshape(shape)
        return Jet(self.coeffs[tuple(sl)] * factor, K - 1)

    def _series(self, derivs: Iterable) -> "Jet":
        """Compose with a scalar function given its Taylor coefficients at f(0)."""
        h = self - self.value
        out = Jet.zeros(self.dim, self.order, self.coeffs.dtype)
        power = Jet.constant(1.0, self.dim, self.order)
        for k, ck in enumerate(derivs):
            if k > self.order:
                break
            out = out + power * ck
            power = power * h
        return out

    def reciprocal(self) -> "Jet":
        c = self.value
        if c == 0:
            raise ZeroDivisionError("jet with zero constant term has no reciprocal")
        return self._series((-1) ** k / c ** (k + 1) for k in range(self.order + 1))

    def exp(self) -> "Jet":
        e = np.exp(self.value)
        return self._series(e / math.factorial(k) for k in range(self.order + 1))

    def power(self, a: float, root=None) -> "Jet":
        """``f**a`` with the branch fixed by ``root = f(0)**a`` (principal if omitted)."""
        c = self.value
        if c == 0:
            raise ZeroDivisionError("non-integer power of a jet vanishing at 0")
        root = c ** a if root is None else root
        coeffs = []
        binom = 1.0
        for k in range(self.order + 1):
            coeffs.append(root * binom / c ** k)
            binom *= (a - k) / (k + 1)
        return self._series(coeffs)

    def sqrt(self, root=None) -> "Jet":
        return self.power(0.5, root)


def _check_compatible(a: Jet, b: Jet) -> None:
    if a.dim != b.dim or a.order != b.order:
        raise JetMismatchError(
            f"jet mismatch: dim {a.dim} vs {b.dim}, order {a.order} vs {b.order}")


def _truncated_product(a: np.ndarray, b: np.ndarray, order: int) -> np.ndarray:
    n = a.ndim
    out = np.zeros(a.shape, dtype=np.result_type(a, b))
    if n == 0:
        return a * b
    deg = _degree_grid(n, order)
    for alpha in np.argwhere((a != 0) & (deg <= order)):
        # b restricted to indices with |beta| <= r lands inside the grid
        src = tuple(slice(0, order + 1 - int(ai)) for ai in alpha)
        dst = tuple(slice(int(ai), order + 1) for ai in alpha)
        out[dst] += a[tuple(alpha)] * b[src]
    out[deg > order] = 0
    return out


def jet_arith(a: Jet, b, op: str) -> Jet:
    """Truncated Taylor arithmetic: ``op`` is one of ``add``, ``mul``, ``scale``."""
    if op == "add":
        if not isinstance(b, Jet):
            raise TypeError("add expects two jets")
        return a + b
    if op == "mul":
        if not isinstance(b, Jet):
            raise TypeError("mul expects two jets")
        return a * b
    if op == "scale":
        if isinstance(b, Jet):
            raise TypeError("scale expects a scalar")
        return a * b
    raise ValueError(f"unknown jet operation {op!r}")
