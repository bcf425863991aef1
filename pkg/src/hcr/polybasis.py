"""
Orthonormal polynomial basis on [0, 1].

The basis functions are rescaled shifted Legendre polynomials,

    f_j(x) = sqrt(2j + 1) * P_j(2x - 1),

so that ``int_0^1 f_j f_k dx = delta_jk``.  Monomial coefficients of
``P_j(2x - 1)`` are integers and are kept exactly; the irrational factor
``sqrt(2j + 1)`` is applied once, in floating point.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DegreeUnsupportedError, DomainError

MAX_DEGREE = 12

__all__ = [
    "MAX_DEGREE",
    "OrthoBasis",
    "build_basis",
    "eval_basis",
    "integrate_product",
]


def _shifted_legendre_int(j: int) -> tuple[int, ...]:
    # P_j(2x - 1) = sum_k (-1)^(j+k) C(j,k) C(j+k,k) x^k
    return tuple(
        (-1) ** (j + k) * math.comb(j, k) * math.comb(j + k, k) for k in range(j + 1)
    )


@dataclass(frozen=True)
class OrthoBasis:
    """
    Orthonormal polynomials f_0..f_m on [0, 1].

    Attributes
    ----------
    max_degree : int
        Largest degree m.
    int_coeffs : tuple of tuple of int
        ``int_coeffs[j][k]`` is the coefficient of x^k in P_j(2x - 1)
        (ascending powers).  Exact.
    norms : ndarray
        ``sqrt(2j + 1)``.
    coeffs : ndarray, shape (m + 1, m + 1)
        Float monomial coefficients of f_j, ascending powers, zero padded.
    """

    max_degree: int
    int_coeffs: tuple
    norms: np.ndarray = field(repr=False, compare=False)
    coeffs: np.ndarray = field(repr=False, compare=False)

    @property
    def size(self) -> int:
        return self.max_degree + 1

    def __call__(self, x):
        return eval_basis(self, x)

    def exact_coeffs(self, j: int) -> tuple[Fraction, ...]:
        """Coefficients of f_j / sqrt(2j+1) as exact rationals."""
        return tuple(Fraction(c) for c in self.int_coeffs[j])

    def to_json(self) -> str:
        """Float monomial coefficients as an array of arrays of decimal strings."""
        rows = [
            [repr(float(c)) for c in self.coeffs[j, : j + 1]]
            for j in range(self.size)
        ]
        return json.dumps({"max_degree": self.max_degree, "coeffs": rows})


def build_basis(m: int) -> OrthoBasis:
    """
    Build the orthonormal basis f_0..f_m on [0, 1].

    Parameters
    ----------
    m : int
        Maximal degree, ``0 <= m <= 12``.

    Returns
    -------
    OrthoBasis

    Examples
    --------
    >>> b = build_basis(1)
    >>> b.coeffs[1] / np.sqrt(3)
    array([-1.,  2.])
    """
    if isinstance(m, bool) or not isinstance(m, (int, np.integer)):
        raise DegreeUnsupportedError(f"degree must be an integer, got {m!r}")
    m = int(m)
    if not 0 <= m <= MAX_DEGREE:
        raise DegreeUnsupportedError(
            f"degree {m} outside supported range 0..{MAX_DEGREE}"
        )
    ints = tuple(_shifted_legendre_int(j) for j in range(m + 1))
    norms = np.sqrt(2.0 * np.arange(m + 1) + 1.0)
    coeffs = np.zeros((m + 1, m + 1))
    for j, row in enumerate(ints):
        coeffs[j, : j + 1] = np.asarray(row, dtype=float) * norms[j]
    norms.setflags(write=False)
    coeffs.setflags(write=False)
    return OrthoBasis(m, ints, norms, coeffs)


def eval_basis(basis: OrthoBasis, x) -> np.ndarray:
    """
    Evaluate all basis functions at ``x``.

    Parameters
    ----------
    basis : OrthoBasis
    x : float or array_like
        Points in [0, 1].

    Returns
    -------
    ndarray
        Shape ``np.shape(x) + (m + 1,)``; the last axis holds f_0(x)..f_m(x).
    """
    xa = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(xa)) or np.any(xa < 0.0) or np.any(xa > 1.0):
        raise DomainError("basis evaluation requires x in [0, 1]")
    out = np.empty(xa.shape + (basis.size,))
    for j, row in enumerate(basis.int_coeffs):
        # Horner on the exact integer coefficients; integers stay below 2**53
        acc = np.full(xa.shape, float(row[-1]))
        for c in row[-2::-1]:
            acc = acc * xa + c
        out[..., j] = acc * basis.norms[j]
    return out


def integrate_product(basis: OrthoBasis, j: int, k: int) -> float:
    """Exact monomial integral of f_j * f_k over [0, 1]."""
    m = basis.max_degree
    if not (0 <= j <= m and 0 <= k <= m):
        raise IndexError(f"indices ({j}, {k}) outside basis of degree {m}")
    cj, ck = basis.int_coeffs[j], basis.int_coeffs[k]
    total = Fraction(0)
    for a, ca in enumerate(cj):
        for b, cb in enumerate(ck):
            total += Fraction(ca * cb, a + b + 1)
    if j == k:
        # total == 1 / (2j + 1) exactly, so the normalized result is exactly 1
        return float(total * (2 * j + 1))
    return float(total) * math.sqrt((2 * j + 1) * (2 * k + 1))
