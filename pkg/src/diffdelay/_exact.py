"""Small exact rational linear-algebra helpers on numpy object arrays."""
from __future__ import annotations

from fractions import Fraction
from numbers import Rational

import numpy as np


def to_fraction(x) -> Fraction:
    """Exact rational value of ``x``.

    Integers, ``Fraction`` and rational strings ("p/q", "0.25") are taken
    literally; floats are converted to the exact value of their binary
    representation.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (bool, np.bool_)):
        return Fraction(int(x))
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, Rational):
        return Fraction(x.numerator, x.denominator)
    if isinstance(x, str):
        return Fraction(x.strip())
    xf = float(x)
    if not np.isfinite(xf):
        raise ValueError(f"non-finite value {x!r}")
    return Fraction(xf)


def frac_array(a) -> np.ndarray:
    """Object array of Fractions with the shape of ``a``."""
    arr = np.asarray(a, dtype=object)
    out = np.empty(arr.shape, dtype=object)
    for idx in np.ndindex(arr.shape):
        out[idx] = to_fraction(arr[idx])
    return out


def frac_eye(n: int) -> np.ndarray:
    out = np.full((n, n), Fraction(0), dtype=object)
    for i in range(n):
        out[i, i] = Fraction(1)
    return out


def frac_zeros(shape) -> np.ndarray:
    return np.full(shape, Fraction(0), dtype=object)


def rref(mat: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form over the rationals.

    Returns
    -------
    R : ndarray of Fraction
    pivots : list of int
        Pivot column indices.
    """
    R = np.array(mat, dtype=object, copy=True)
    rows, cols = R.shape
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        if r >= rows:
            break
        piv = None
        for i in range(r, rows):
            if R[i, c] != 0:
                piv = i
                break
        if piv is None:
            continue
        if piv != r:
            R[[r, piv]] = R[[piv, r]]
        inv = 1 / R[r, c]
        R[r] = R[r] * inv
        for i in range(rows):
            if i != r and R[i, c] != 0:
                R[i] = R[i] - R[i, c] * R[r]
        pivots.append(c)
        r += 1
    return R, pivots


def exact_rank(mat: np.ndarray) -> int:
    if mat.size == 0:
        return 0
    return len(rref(mat)[1])


def solve_exact(A: np.ndarray, b: np.ndarray) -> np.ndarray | None:
    """One exact solution of ``A x = b`` (free variables set to zero).

    ``b`` may be a vector or a matrix of right-hand sides.  Returns None
    when the system is inconsistent.
    """
    A = np.asarray(A, dtype=object)
    b2 = np.asarray(b, dtype=object)
    vec = b2.ndim == 1
    if vec:
        b2 = b2.reshape(-1, 1)
    n = A.shape[1]
    R, piv = rref(np.hstack([A, b2]))
    k = b2.shape[1]
    for c in piv:
        if c >= n:
            return None
    x = frac_zeros((n, k))
    for i, c in enumerate(piv):
        x[c] = R[i, n:]
    return x[:, 0] if vec else x


def column_basis(mat: np.ndarray) -> np.ndarray:
    """Columns of ``mat`` forming a basis of its column space."""
    _, piv = rref(mat)
    return mat[:, piv]


def to_float(mat) -> np.ndarray:
    return np.asarray(mat, dtype=object).astype(float)
