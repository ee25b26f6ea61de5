"""System description, validation, delay classification and augmentation.

A system is ``x(t) = sum_j A_j x(t - L_j) + B u(t)`` with delays
``0 < L_1 < ... < L_N``.  Delays given as integers, ``Fraction`` or
rational strings are kept exactly; floats stay floating.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from ._exact import frac_array, to_fraction


class ValidationError(ValueError):
    """Malformed system data.  ``code`` names the failure."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass(frozen=True, eq=False)
class DelaySystem:
    """Validated multi-delay difference system.

    Attributes
    ----------
    delays : tuple of float
        Sorted, strictly increasing positive delays.
    exact_delays : tuple
        ``Fraction`` for delays given exactly, ``None`` for floating ones.
    A : tuple of ndarray
        ``d x d`` float matrices, one per delay.
    B : ndarray
        ``d x m`` float matrix.
    A_exact, B_exact : object arrays of Fraction
        Exact rational values of the stored matrices.
    delay_class : str or None
        Optional annotation; ``"independent"`` asserts rational independence.
    """

    delays: tuple
    exact_delays: tuple
    A: tuple
    B: np.ndarray
    A_exact: tuple = field(repr=False)
    B_exact: np.ndarray = field(repr=False)
    delay_class: str | None = None

    @property
    def d(self) -> int:
        return self.B.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def N(self) -> int:
        return len(self.delays)

    @property
    def max_delay(self) -> float:
        return self.delays[-1]

    @property
    def all_exact(self) -> bool:
        return all(x is not None for x in self.exact_delays)

    def with_matrices(self, A, B) -> "DelaySystem":
        delays = [e if e is not None else f for e, f in zip(self.exact_delays, self.delays)]
        return validate(delays, A, B, delay_class=self.delay_class)

    def to_dict(self) -> dict:
        delays = []
        for e, f in zip(self.exact_delays, self.delays):
            if e is None:
                delays.append(f)
            elif e.denominator == 1:
                delays.append(int(e))
            else:
                delays.append(f"{e.numerator}/{e.denominator}")
        out = {
            "d": self.d,
            "m": self.m,
            "delays": delays,
            "A": [a.tolist() for a in self.A],
            "B": self.B.tolist(),
        }
        if self.delay_class:
            out["delay_class"] = self.delay_class
        return out


def _parse_delay(x):
    if isinstance(x, bool):
        raise ValidationError("bad_delay", f"boolean delay {x!r}")
    if isinstance(x, (int, np.integer, Fraction, str)):
        try:
            fr = to_fraction(x)
        except (ValueError, ZeroDivisionError) as exc:
            raise ValidationError("bad_delay", f"cannot parse delay {x!r}") from exc
        return float(fr), fr
    try:
        xf = float(x)
    except (TypeError, ValueError) as exc:
        raise ValidationError("bad_delay", f"cannot parse delay {x!r}") from exc
    return xf, None


def _as_matrix(a, name: str) -> tuple[np.ndarray, np.ndarray]:
    try:
        exact = frac_array(a)
    except (ValueError, TypeError, ZeroDivisionError) as exc:
        raise ValidationError("bad_entry", f"{name} has a non-numeric or non-finite entry") from exc
    if exact.ndim != 2:
        raise ValidationError("dimension_mismatch", f"{name} must be two-dimensional")
    flt = exact.astype(float)
    if not np.all(np.isfinite(flt)):
        raise ValidationError("non_finite", f"{name} has a non-finite entry")
    flt.setflags(write=False)
    exact.setflags(write=False)
    return flt, exact


def validate(delays, A, B, delay_class: str | None = None) -> DelaySystem:
    """Check and normalize raw system data.

    Delays are sorted (matrices permuted along), and must be finite,
    positive and pairwise distinct.  All ``A_j`` must be ``d x d`` and
    ``B`` must be ``d x m`` with ``m >= 1``.
    """
    delays = list(delays)
    A = list(A)
    if len(delays) == 0:
        raise ValidationError("dimension_mismatch", "at least one delay is required")
    if len(delays) != len(A):
        raise ValidationError("dimension_mismatch", f"{len(delays)} delays but {len(A)} matrices")
    parsed = [_parse_delay(x) for x in delays]
    for f, _ in parsed:
        if not math.isfinite(f):
            raise ValidationError("non_finite", "delays must be finite")
        if f <= 0:
            raise ValidationError("non_positive", "delays must be positive")
    order = sorted(range(len(parsed)), key=lambda i: parsed[i][0])
    parsed = [parsed[i] for i in order]
    A = [A[i] for i in order]
    for (f1, e1), (f2, e2) in zip(parsed, parsed[1:]):
        same = (e1 == e2) if (e1 is not None and e2 is not None) else (f1 == f2)
        if same:
            raise ValidationError("duplicate_delay", f"delay {f1} appears twice")
    Bf, Be = _as_matrix(B, "B")
    d, m = Bf.shape
    if d < 1 or m < 1:
        raise ValidationError("dimension_mismatch", "B must be d x m with d, m >= 1")
    Af, Ae = [], []
    for j, a in enumerate(A):
        f, e = _as_matrix(a, f"A[{j}]")
        if f.shape != (d, d):
            raise ValidationError("dimension_mismatch", f"A[{j}] has shape {f.shape}, expected {(d, d)}")
        Af.append(f)
        Ae.append(e)
    if delay_class == "irrational":
        delay_class = "independent"
    if delay_class is not None and delay_class != "independent":
        raise ValidationError("bad_delay_class", f"unknown delay_class {delay_class!r}")
    return DelaySystem(
        delays=tuple(f for f, _ in parsed),
        exact_delays=tuple(e for _, e in parsed),
        A=tuple(Af),
        B=Bf,
        A_exact=tuple(Ae),
        B_exact=Be,
        delay_class=delay_class,
    )


def from_dict(data: dict) -> DelaySystem:
    """Build a system from the JSON spec-file layout."""
    for key in ("delays", "A", "B"):
        if key not in data:
            raise ValidationError("missing_field", f"field {key!r} is required")
    sys_ = validate(data["delays"], data["A"], data["B"], data.get("delay_class"))
    if "d" in data and int(data["d"]) != sys_.d:
        raise ValidationError("dimension_mismatch", f"declared d={data['d']} but B has {sys_.d} rows")
    if "m" in data and int(data["m"]) != sys_.m:
        raise ValidationError("dimension_mismatch", f"declared m={data['m']} but B has {sys_.m} columns")
    return sys_


def load_spec(path) -> DelaySystem:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError("bad_json", str(exc)) from exc
    return from_dict(data)


# -- delay classification ---------------------------------------------------

@dataclass(frozen=True)
class DelayClass:
    """Outcome of the commensurability analysis.

    ``kind`` is ``"commensurable"``, ``"independent"`` or ``"mixed"``.
    For commensurable delays ``step`` is the largest ``D`` with every delay
    an integer multiple ``multiples[j] * D``.  ``assumed`` is True when the
    classification rests on an annotation or a floating-point heuristic.
    """

    kind: str
    step: Fraction | float | None = None
    multiples: tuple | None = None
    assumed: bool = False
    note: str = ""


def _frac_gcd(values) -> Fraction:
    num = 0
    den = 1
    for v in values:
        num = math.gcd(num, v.numerator)
        den = den * v.denominator // math.gcd(den, v.denominator)
    return Fraction(num, den)


def _integer_relation(delays, bound: int, tol: float):
    """Small nonzero integer vector c with |c . delays| tiny, or None."""
    lam = np.asarray(delays, dtype=float)
    n = lam.size
    if n < 2:
        return None
    bound = max(1, min(bound, int(round(2e6 ** (1.0 / n)))))
    rng = np.arange(-bound, bound + 1)
    grids = np.meshgrid(*([rng] * n), indexing="ij")
    C = np.stack([g.ravel() for g in grids], axis=1)
    C = C[np.any(C != 0, axis=1)]
    vals = np.abs(C @ lam)
    k = int(np.argmin(vals))
    if vals[k] <= tol * lam.max():
        return tuple(int(c) for c in C[k])
    return None


def commensurability(system: DelaySystem, relation_bound: int = 12, tol: float = 1e-9) -> DelayClass:
    """Classify the delays of ``system``.

    Exact rational delays are commensurable with step equal to their
    rational gcd.  A single delay is trivially commensurable.  Floating
    delays never yield a commensurable verdict; they are tagged independent
    (assumed) unless a small integer relation is detected, in which case
    they are tagged mixed.
    """
    if system.N == 1:
        e = system.exact_delays[0]
        step = e if e is not None else system.delays[0]
        return DelayClass("commensurable", step, (1,), False, "single delay")
    exact = [e for e in system.exact_delays if e is not None]
    if system.all_exact:
        g = _frac_gcd(exact)
        mult = tuple(int(e / g) for e in system.exact_delays)
        return DelayClass("commensurable", g, mult, False, "exact rational delays")
    if len(exact) >= 2:
        return DelayClass("mixed", None, None, False,
                          "some delays are exact rationals and rationally dependent, others are floating")
    if system.delay_class == "independent":
        return DelayClass("independent", None, None, True, "rational independence annotated")
    rel = _integer_relation(system.delays, relation_bound, tol)
    if rel is not None:
        return DelayClass("mixed", None, None, True,
                          f"floating delays satisfy the integer relation {rel}; supply exact rationals")
    return DelayClass("independent", None, None, True,
                      "no small integer relation among floating delays")


# -- augmentation -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Augmented:
    """Single-step lifted system ``z(i) = A z(i-1) + B u(i)``.

    The state ``z(i)`` stacks ``x(i), x(i-1), ..., x(i-K+1)`` on the grid of
    spacing ``step``.  ``index_map[r] = (component, lag)``.
    """

    A: np.ndarray
    B: np.ndarray
    A_exact: np.ndarray
    B_exact: np.ndarray
    step: Fraction | float
    multiples: tuple
    index_map: tuple


def augment(system: DelaySystem, dc: DelayClass | None = None) -> Augmented:
    """Lift a commensurable system to an ordinary one-step recursion."""
    dc = dc or commensurability(system)
    if dc.kind != "commensurable":
        raise ValidationError("not_commensurable", "augmentation needs commensurable delays")
    d, m = system.d, system.m
    ks = dc.multiples
    K = ks[-1]
    n = d * K
    Ae = np.full((n, n), Fraction(0), dtype=object)
    for j, k in enumerate(ks):
        Ae[:d, (k - 1) * d:k * d] = Ae[:d, (k - 1) * d:k * d] + system.A_exact[j]
    for b in range(1, K):
        for i in range(d):
            Ae[b * d + i, (b - 1) * d + i] = Fraction(1)
    Be = np.full((n, m), Fraction(0), dtype=object)
    Be[:d, :] = system.B_exact
    index_map = tuple((i % d, i // d) for i in range(n))
    return Augmented(Ae.astype(float), Be.astype(float), Ae, Be, dc.step, ks, index_map)
