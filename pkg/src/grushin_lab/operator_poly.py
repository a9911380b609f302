"""Polynomial operators in (t, D_t) and their grid realizations.

An operator is a finite sum of monomials ``coeff * t^alpha D_t^beta`` with
``D_t = -i d/dt`` and the convention that multiplication acts after
differentiation.  Localized operators of anisotropic degree ``2 + r/h`` are
assembled from Taylor data of the transversal coefficients: the second-order
symbol contributes ``D_t^2`` (r = 0 only) and ``a_r t^(2h+r) |xi'|^2``, the
first-order symbol contributes ``b_r t^(h-1+r)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError
from .spectral_core import Grid

EVEN, ODD, MIXED = "even", "odd", "mixed"


def _normalize_terms(terms) -> tuple[tuple[int, int, complex], ...]:
    acc: dict[tuple[int, int], complex] = {}
    for alpha, beta, coeff in terms:
        alpha, beta = int(alpha), int(beta)
        if alpha < 0 or beta < 0:
            raise ConfigurationError("monomial powers must be nonnegative")
        key = (alpha, beta)
        acc[key] = acc.get(key, 0.0) + complex(coeff)
    return tuple((a, b, c) for (a, b), c in sorted(acc.items()) if c != 0)


@dataclass(frozen=True)
class OperatorPoly:
    """Normalized sum of monomials t^alpha D_t^beta (no duplicate keys)."""

    terms: tuple[tuple[int, int, complex], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "terms", _normalize_terms(self.terms))

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other: "OperatorPoly") -> "OperatorPoly":
        return OperatorPoly(self.terms + other.terms)

    def scale(self, c: complex) -> "OperatorPoly":
        return OperatorPoly(tuple((a, b, c * w) for a, b, w in self.terms))

    def to_json(self) -> list[dict]:
        return [{"alpha": a, "beta": b, "coeff": [c.real, c.imag]}
                for a, b, c in self.terms]

    @classmethod
    def from_json(cls, data: list[dict]) -> "OperatorPoly":
        return cls(tuple((int(d["alpha"]), int(d["beta"]),
                          complex(d["coeff"][0], d["coeff"][1])) for d in data))


def parity_of(op: OperatorPoly) -> str:
    """Parity of the operator under t -> -t: even/odd if every monomial has
    alpha + beta of that parity, mixed otherwise.  The zero operator counts
    as even."""
    if op.is_zero:
        return EVEN
    parities = {(a + b) % 2 for a, b, _ in op.terms}
    if parities == {0}:
        return EVEN
    if parities == {1}:
        return ODD
    return MIXED


def _first_difference(grid: Grid) -> sp.csr_matrix:
    inv = 1.0 / (2.0 * grid.delta)
    off = np.full(grid.N - 1, inv)
    return sp.diags([off, -off], [1, -1], format="csr") * (-1j)


def _second_difference(grid: Grid) -> sp.csr_matrix:
    inv2 = 1.0 / grid.delta ** 2
    main = np.full(grid.N, 2.0 * inv2)
    off = np.full(grid.N - 1, -inv2)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr").astype(np.complex128)


def _derivative_power(grid: Grid, beta: int) -> sp.csr_matrix:
    if beta == 0:
        return sp.identity(grid.N, dtype=np.complex128, format="csr")
    if beta == 1:
        return _first_difference(grid)
    d2 = _second_difference(grid)
    out = sp.identity(grid.N, dtype=np.complex128, format="csr")
    for _ in range(beta // 2):
        out = d2 @ out
    if beta % 2:
        out = _first_difference(grid) @ out
    return out


def to_matrix(op: OperatorPoly, grid: Grid) -> sp.csr_matrix:
    """Grid matrix with D_t as -i * central first difference, D_t^2 as the
    3-point second difference, and t^alpha as a diagonal acting afterwards."""
    t = grid.points()
    out = sp.csr_matrix((grid.N, grid.N), dtype=np.complex128)
    for alpha, beta, coeff in op.terms:
        term = _derivative_power(grid, beta)
        if alpha:
            term = sp.diags(t ** alpha).astype(np.complex128) @ term
        out = out + coeff * term
    return out


def adjoint_matrix(op: OperatorPoly, grid: Grid) -> sp.csr_matrix:
    """Conjugate transpose of the grid realization."""
    return to_matrix(op, grid).getH().tocsr()


def _taylor_coeff(taylor: tuple, r: int, label: str) -> complex:
    """Taylor coefficient of order r.  A length-1 list declares an exactly
    constant coefficient (all higher orders vanish); longer lists are
    truncated expansions and must reach order r."""
    if len(taylor) == 1:
        return taylor[0] if r == 0 else 0.0
    if r >= len(taylor):
        raise ConfigurationError(
            f"{label} Taylor data insufficient for order {r} "
            f"(have {len(taylor)} coefficients)")
    return taylor[r]


@dataclass(frozen=True)
class TransversalData:
    """Numeric callbacks for the transversal dependence of the coefficients,
    used only by bracket evaluations.  ``a_fn(x)`` and ``b1_fn(x, xi)`` take
    length-dim coordinate arrays."""

    dim: int
    x0: tuple[float, ...]
    xi0: tuple[float, ...]
    a_fn: Callable
    b1_fn: Callable


@dataclass(frozen=True)
class CoefficientModel:
    """Taylor data in x1 at 0 of a(x1, x') and b1(x1, x', xi') at a frozen
    base point, with |xi'| split off the a-part."""

    h: int
    a_taylor: tuple[float, ...]
    b1_taylor: tuple[complex, ...]
    xi_norm: float = 1.0
    base_point: str = ""
    transversal: TransversalData | None = None

    def __post_init__(self):
        object.__setattr__(self, "a_taylor", tuple(float(a) for a in self.a_taylor))
        object.__setattr__(self, "b1_taylor", tuple(complex(b) for b in self.b1_taylor))
        if int(self.h) != self.h or self.h < 1:
            raise ConfigurationError("h must be a positive integer")
        if not self.a_taylor or not self.a_taylor[0] > 0:
            raise ConfigurationError("a_taylor[0] must be positive")
        if not self.b1_taylor:
            raise ConfigurationError("b1_taylor must be nonempty")
        if not self.xi_norm > 0:
            raise ConfigurationError("xi_norm must be positive")

    @property
    def tangential(self) -> bool:
        """True when both coefficients are declared constant in x1."""
        return len(self.a_taylor) == 1 and len(self.b1_taylor) == 1

    def scaled(self, s: float) -> "CoefficientModel":
        """Model after |xi'| -> s |xi'|; b1 is 1-homogeneous in xi'."""
        return CoefficientModel(
            h=self.h, a_taylor=self.a_taylor,
            b1_taylor=tuple(s * b for b in self.b1_taylor),
            xi_norm=s * self.xi_norm, base_point=self.base_point,
            transversal=self.transversal)

    def to_json(self) -> dict:
        return {
            "h": self.h,
            "a_taylor": list(self.a_taylor),
            "b1_taylor": [[b.real, b.imag] for b in self.b1_taylor],
            "xi_norm": self.xi_norm,
            "base_point": self.base_point,
        }

    @classmethod
    def from_json(cls, d: dict) -> "CoefficientModel":
        return cls(
            h=int(d["h"]),
            a_taylor=tuple(float(a) for a in d["a_taylor"]),
            b1_taylor=tuple(complex(b[0], b[1]) if isinstance(b, (list, tuple))
                            else complex(b) for b in d["b1_taylor"]),
            xi_norm=float(d.get("xi_norm", 1.0)),
            base_point=d.get("base_point", ""))


def localized_operator(model: CoefficientModel, r: int) -> OperatorPoly:
    """Localized operator of anisotropic degree 2 + r/h at the base point."""
    if r < 0:
        raise ConfigurationError("order r must be >= 0")
    h = model.h
    xi2 = model.xi_norm ** 2
    a_r = _taylor_coeff(model.a_taylor, r, "a")
    b_r = _taylor_coeff(model.b1_taylor, r, "b1")
    terms = [(2 * h + r, 0, a_r * xi2), (h - 1 + r, 0, b_r)]
    if r == 0:
        terms.append((0, 2, 1.0))
    return OperatorPoly(tuple(terms))


def _series_mul(p, q):
    return np.convolve(p, q)


def _series_diff(p):
    if len(p) <= 1:
        return np.zeros(1, dtype=p.dtype)
    return p[1:] * np.arange(1, len(p))


def _series_shift(p, k):
    return np.concatenate([np.zeros(k, dtype=p.dtype), p])


def _series_coeff(p, k):
    return p[k] if 0 <= k < len(p) else 0.0


def kohn_extension_operators(h: int, k: int, *, xi2: float = 1.0,
                             a_taylor=(1.0,), b_taylor=(1.0,),
                             max_order: int = 2) -> list[OperatorPoly]:
    """Localized operators of the complex vector-field model
    ``L L* + (f L)* (f L)`` with ``L = D_1 + i g(x_1) D_2``,
    ``g = a(x_1) x_1^h`` and ``f = b(x_1) x_1^k``, frozen at
    ``(x_1, xi_1) = (0, 0)`` with transversal frequency ``xi2``.

    The full operator is ``(1+f^2) D_1^2 - i (f^2)' D_1 + (1+f^2) g^2 D_2^2
    + ((f^2 g)' - g') D_2``; its degree-(2 + r/h) parts collect the Taylor
    coefficients of those four symbols.  Returns ``[Q_0, ..., Q_max_order]``.
    """
    if h < 1 or k < 1:
        raise ConfigurationError("h and k must be positive integers")
    a = np.asarray(a_taylor, dtype=np.complex128)
    b = np.asarray(b_taylor, dtype=np.complex128)
    if a[0].real <= 0 or a[0].imag:
        raise ConfigurationError("a(0) must be real positive")
    g = _series_shift(a, h)
    f2 = _series_shift(_series_mul(b, b), 2 * k)
    one_f2 = f2.copy() if len(f2) else np.zeros(1, dtype=np.complex128)
    if len(one_f2) == 0:
        one_f2 = np.zeros(1, dtype=np.complex128)
    one_f2 = np.concatenate([one_f2, np.zeros(1, dtype=np.complex128)])
    one_f2[0] += 1.0
    big_g = _series_mul(one_f2, _series_mul(g, g))
    q_xi2 = np.polysub(_series_diff(_series_mul(f2, g))[::-1],
                       _series_diff(g)[::-1])[::-1]
    p1_xi1 = -1j * _series_diff(f2)

    ops = []
    for r in range(max_order + 1):
        terms = [
            (r, 2, _series_coeff(one_f2, r)),
            (2 * h + r, 0, _series_coeff(big_g, 2 * h + r) * xi2 ** 2),
            (h - 1 + r, 0, _series_coeff(q_xi2, h - 1 + r) * xi2),
        ]
        if r >= 1:
            terms.append((r - 1, 1, _series_coeff(p1_xi1, r - 1)))
        ops.append(OperatorPoly(tuple(terms)))
    return ops
