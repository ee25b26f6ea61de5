"""Multi-index coefficient matrices and the multivariate Cayley-Hamilton identity.

``Xi[n]`` is the sum of all ordered products of the ``A_j`` containing
``A_j`` exactly ``n_j`` times.  ``det(I - sum_j t_j A_j) = sum_k alpha_k t^k``
and for ``|n| >= d`` the identity ``Xi[n] = -sum_{0<|k|<=d} alpha_k Xi[n-k]``
holds.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._exact import frac_eye, frac_zeros
from .core import DelaySystem


class CapabilityError(RuntimeError):
    """Requested computation exceeds a documented cap."""


def multi_indices(N: int, total: int):
    """All ``n`` in N^N with ``|n| == total``, in lexicographic order."""
    if N == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in multi_indices(N - 1, total - first):
            yield (first,) + rest


@dataclass(frozen=True, eq=False)
class XiTable:
    """Coefficient matrices ``Xi[n]`` for ``|n| <= depth``."""

    mats: dict
    depth: int
    N: int
    exact: bool

    def __getitem__(self, n) -> np.ndarray:
        n = tuple(n)
        if any(v < 0 for v in n):
            return self.zero()
        if sum(n) > self.depth:
            raise KeyError(f"|n|={sum(n)} exceeds table depth {self.depth}")
        return self.mats[n]

    def zero(self) -> np.ndarray:
        any_mat = self.mats[(0,) * self.N]
        if self.exact:
            return frac_zeros(any_mat.shape)
        return np.zeros(any_mat.shape)

    def keys(self):
        return self.mats.keys()


def xi_table(system: DelaySystem, depth: int, exact: bool = False,
             max_entries: int = 50_000_000) -> XiTable:
    """Build ``Xi[n]`` for all ``|n| <= depth``.

    Parameters
    ----------
    system : DelaySystem
    depth : int
        Largest total degree ``|n|`` to tabulate.
    exact : bool
        Use the exact rational matrices (object arrays of Fraction).
    max_entries : int
        Memory budget in matrix entries; exceeding it raises CapabilityError.
    """
    if depth < 0:
        raise ValueError("depth must be non-negative")
    N, d = system.N, system.d
    count = math.comb(depth + N, N)
    if count * d * d > max_entries:
        raise CapabilityError(f"{count} multi-indices of size {d}x{d} exceed the budget")
    As = system.A_exact if exact else system.A
    I = frac_eye(d) if exact else np.eye(d)
    zero = frac_zeros((d, d)) if exact else np.zeros((d, d))
    mats = {(0,) * N: I}
    for total in range(1, depth + 1):
        for n in multi_indices(N, total):
            acc = zero.copy()
            for k in range(N):
                if n[k] == 0:
                    continue
                prev = n[:k] + (n[k] - 1,) + n[k + 1:]
                acc = acc + As[k] @ mats[prev]
            mats[n] = acc
    return XiTable(mats, depth, N, exact)


# -- characteristic polynomial ----------------------------------------------

def _padd(p: dict, q: dict, sign: int = 1) -> dict:
    out = dict(p)
    for k, v in q.items():
        out[k] = out.get(k, 0) + sign * v
        if out[k] == 0:
            del out[k]
    return out


def _pmul(p: dict, q: dict) -> dict:
    out: dict = {}
    for k1, v1 in p.items():
        for k2, v2 in q.items():
            k = tuple(a + b for a, b in zip(k1, k2))
            out[k] = out.get(k, 0) + v1 * v2
    return {k: v for k, v in out.items() if v != 0}


def ch_coefficients(system: DelaySystem, cap: int = 6) -> dict:
    """Exact coefficients of ``det(I - sum_j t_j A_j)``.

    Returns a dict mapping multi-index ``k`` to a ``Fraction`` ``alpha_k``;
    zero coefficients are omitted and ``alpha_0 == 1``.  The matrices are
    taken at their exact rational value.
    """
    d, N = system.d, system.N
    if d > cap:
        raise CapabilityError(f"d={d} exceeds the Cayley-Hamilton cap {cap}")
    zero_key = (0,) * N
    entries = [[None] * d for _ in range(d)]
    for i in range(d):
        for c in range(d):
            poly = {zero_key: Fraction(1)} if i == c else {}
            for j in range(N):
                v = system.A_exact[j][i, c]
                if v != 0:
                    key = tuple(1 if t == j else 0 for t in range(N))
                    poly[key] = poly.get(key, 0) - v
            entries[i][c] = poly
    # Laplace expansion along rows, memoized on the set of used columns.
    minors = {(): {zero_key: Fraction(1)}}
    for r in range(d):
        nxt = {}
        for cols in itertools.combinations(range(d), r + 1):
            acc: dict = {}
            for pos, c in enumerate(cols):
                rest = cols[:pos] + cols[pos + 1:]
                sub = minors[rest]
                if not sub or not entries[r][c]:
                    continue
                acc = _padd(acc, _pmul(entries[r][c], sub), -1 if (pos + r) % 2 else 1)
            nxt[cols] = acc
        minors = nxt
    return minors[tuple(range(d))]


def ch_identity_residual(table: XiTable, coeffs: dict, n, d: int) -> float:
    """Max-abs entry of ``Xi[n] + sum_{0<|k|<=d} alpha_k Xi[n-k]``."""
    n = tuple(n)
    if sum(n) < d:
        raise ValueError(f"the identity needs |n| >= d, got |n|={sum(n)} < {d}")
    acc = table[n].copy()
    for k, a in coeffs.items():
        if sum(k) == 0:
            continue
        acc = acc + a * table[tuple(x - y for x, y in zip(n, k))]
    return float(max((abs(v) for v in acc.ravel()), default=0))


# -- exponential polynomial -------------------------------------------------

@dataclass(frozen=True)
class ExpPolynomial:
    """``f(p) = sum_i coeffs[i] * exp(-p * exponents[i])``.

    Exponents are sorted increasingly and pairwise distinct.
    ``exact_exponents`` holds Fractions when grouping was exact.
    """

    exponents: tuple
    coeffs: tuple
    exact_exponents: tuple | None = None

    def __call__(self, p):
        p = np.asarray(p, dtype=complex)
        out = np.zeros(p.shape, dtype=complex)
        for e, c in zip(self.exponents, self.coeffs):
            out = out + complex(c) * np.exp(-p * e)
        return out

    def derivative(self, p):
        p = np.asarray(p, dtype=complex)
        out = np.zeros(p.shape, dtype=complex)
        for e, c in zip(self.exponents, self.coeffs):
            out = out - complex(c) * e * np.exp(-p * e)
        return out

    @property
    def is_constant(self) -> bool:
        return all(e == 0 for e in self.exponents)


def group_exponential(terms, exact: bool, tol: float = 1e-12) -> ExpPolynomial:
    """Collect ``(exponent, coeff)`` pairs with equal exponents.

    With ``exact`` the exponents are Fractions compared exactly; otherwise
    exponents within ``tol * (1 + |e|)`` are merged.
    """
    if exact:
        acc: dict = {}
        for e, c in terms:
            acc[e] = acc.get(e, 0) + c
        items = sorted((e, c) for e, c in acc.items() if c != 0)
        return ExpPolynomial(tuple(float(e) for e, _ in items), tuple(c for _, c in items),
                             tuple(e for e, _ in items))
    items = sorted(((float(e), c) for e, c in terms), key=lambda t: t[0])
    groups: list = []
    for e, c in items:
        if groups and abs(e - groups[-1][0]) <= tol * (1 + abs(e)):
            groups[-1][1] = groups[-1][1] + c
        else:
            groups.append([e, c])
    groups = [g for g in groups if g[1] != 0]
    return ExpPolynomial(tuple(g[0] for g in groups), tuple(g[1] for g in groups), None)


def det_h_exppoly(system: DelaySystem, coeffs: dict | None = None, tol: float = 1e-12) -> ExpPolynomial:
    """``det H(p)`` as an exponential polynomial in ``p``."""
    coeffs = ch_coefficients(system) if coeffs is None else coeffs
    if system.all_exact:
        lam = system.exact_delays
        terms = [(sum(k * l for k, l in zip(key, lam)), a) for key, a in coeffs.items()]
        return group_exponential(terms, True)
    lam = system.delays
    terms = [(sum(k * l for k, l in zip(key, lam)), a) for key, a in coeffs.items()]
    return group_exponential(terms, False, tol)
