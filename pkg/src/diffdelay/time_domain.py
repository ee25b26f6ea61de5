"""Sampled simulation, flow/endpoint operators and range saturation.

Signals are sampled on a uniform grid ``t_i = a + i h``.  Sample ``i``
stands for the value on ``[t_i, t_i + h)``; the recursion is imposed at
every grid time ``t >= 0`` and the initial function is used for ``t < 0``.
With delays that are integer multiples of ``h`` the sampled recursion is
exactly the pointwise recursion of piecewise-constant data.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ._exact import to_fraction
from .core import DelaySystem, commensurability
from .xi_algebra import ch_coefficients, multi_indices, xi_table

log = logging.getLogger(__name__)


class GridError(ValueError):
    """A delay or horizon is not an integer multiple of the step."""


class WindowError(ValueError):
    """Horizon outside the admissible saturation-split window."""


class SplitRejected(RuntimeError):
    """The saturation split failed its runtime residual check."""


@dataclass(frozen=True)
class AnalysisConfig:
    """Numerical settings shared by the analysis routines.

    ``q`` is the Lebesgue exponent of the setting; the sampled algorithms
    do not depend on it and it is carried as metadata only.
    """

    h: float | Fraction = Fraction(1, 10)
    tol: float = 1e-9
    T: float | Fraction | None = None
    q: float = 2.0

    def __post_init__(self):
        if float(self.h) <= 0:
            raise ValueError("h must be positive")
        if not (0 < self.tol < 1):
            raise ValueError("tol must lie in (0, 1)")
        if self.T is not None and float(self.T) < 0:
            raise ValueError("T must be non-negative")
        if self.q < 1:
            raise ValueError("q must be >= 1")


@dataclass(frozen=True, eq=False)
class SampledSignal:
    """Uniform samples of a vector signal on ``[a, b]``.

    ``samples`` has shape ``(K + 1, dim)`` with ``K = (b - a) / h``.
    """

    a: float
    b: float
    h: float
    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        object.__setattr__(self, "samples", s)
        K = (self.b - self.a) / self.h
        if abs(K - round(K)) > 1e-9 * max(1.0, abs(K)):
            raise GridError("interval length is not a multiple of h")
        if s.shape[0] != int(round(K)) + 1:
            raise ValueError(f"expected {int(round(K)) + 1} samples, got {s.shape[0]}")

    @property
    def times(self) -> np.ndarray:
        return self.a + self.h * np.arange(self.samples.shape[0])

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @classmethod
    def from_function(cls, f, a, b, h, dim: int) -> "SampledSignal":
        K = int(round((b - a) / h))
        t = a + h * np.arange(K + 1)
        vals = np.array([np.broadcast_to(np.asarray(f(ti), dtype=float), (dim,)) for ti in t])
        return cls(float(a), float(b), float(h), vals)

    @classmethod
    def constant(cls, value, a, b, h) -> "SampledSignal":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        K = int(round((b - a) / h))
        return cls(float(a), float(b), float(h), np.tile(v, (K + 1, 1)))


def _steps(value, h, what: str, approximate: bool = False) -> int:
    """Number of grid steps in ``value``; exact when both are rational."""
    hv = to_fraction(h) if isinstance(h, (Fraction, int, str)) else None
    if hv is not None and isinstance(value, (Fraction, int)):
        r = Fraction(value) / hv
        if r.denominator == 1:
            return int(r)
        if not approximate:
            raise GridError(f"{what}={value} is not a multiple of h={h}")
        return int(round(r))
    r = float(value) / float(h)
    k = int(round(r))
    if abs(r - k) > 1e-9 * max(1.0, abs(r)):
        if not approximate:
            raise GridError(f"{what}={float(value)} is not a multiple of h={float(h)}")
        log.warning("%s=%g snapped to %d grid steps", what, float(value), k)
    return k


def delay_steps(system: DelaySystem, h, approximate: bool = False) -> tuple:
    ks = []
    for e, f in zip(system.exact_delays, system.delays):
        k = _steps(e if e is not None else f, h, "delay", approximate)
        if k < 1:
            raise GridError(f"delay {f} is shorter than h={float(h)}")
        ks.append(k)
    return tuple(ks)


def _check_signal(sig: SampledSignal, a: float, b: float, h, dim: int, name: str):
    if sig.dim != dim:
        raise ValueError(f"{name} has dimension {sig.dim}, expected {dim}")
    if abs(sig.h - float(h)) > 1e-12 * float(h):
        raise GridError(f"{name} is sampled with h={sig.h}, expected {float(h)}")
    if abs(sig.a - a) > 1e-9 * max(1, abs(a)) or abs(sig.b - b) > 1e-9 * max(1, abs(b)):
        raise ValueError(f"{name} must live on [{a}, {b}], got [{sig.a}, {sig.b}]")


def simulate(system: DelaySystem, x0: SampledSignal, u: SampledSignal,
             approximate: bool = False) -> SampledSignal:
    """Solve the difference equation on the grid of ``u``.

    Parameters
    ----------
    system : DelaySystem
    x0 : SampledSignal
        Initial function on ``[-L_N, 0]``.
    u : SampledSignal
        Input on ``[0, T]`` with the same step.
    approximate : bool
        Snap off-grid delays to the nearest sample instead of raising.

    Returns
    -------
    SampledSignal
        The solution on ``[-L_N, T]``.
    """
    h = x0.h
    ks = delay_steps(system, h, approximate)
    KN = ks[-1]
    if x0.samples.shape[0] != KN + 1 or x0.dim != system.d:
        raise ValueError(f"x0 must have {KN + 1} samples of dimension {system.d}")
    if u.dim != system.m or abs(u.a) > 1e-12 or abs(u.h - h) > 1e-12 * h:
        raise ValueError("u must start at 0, share the step of x0 and have dimension m")
    K = u.samples.shape[0] - 1
    x = np.zeros((KN + K + 1, system.d))
    x[:KN] = x0.samples[:KN]
    Bu = u.samples @ system.B.T
    for i in range(K + 1):
        acc = Bu[i].copy()
        for A, k in zip(system.A, ks):
            acc += A @ x[KN + i - k]
        x[KN + i] = acc
    return SampledSignal(-KN * h, K * h, h, x)


# -- explicit operator formulas ------------------------------------------------

def _xi_by_steps(system: DelaySystem, ks: tuple, max_steps: int):
    """Multi-indices n with ``sum n_j k_j <= max_steps`` and their Xi."""
    depth = max(0, max_steps // ks[0])
    table = xi_table(system, depth)
    out = []
    for total in range(depth + 1):
        for n in multi_indices(system.N, total):
            L = sum(a * b for a, b in zip(n, ks))
            if L <= max_steps:
                out.append((n, L, table[n]))
    return out


def impulse_kernel(system: DelaySystem, ks: tuple, max_steps: int) -> np.ndarray:
    """``W[l] = sum_{n : n.k = l} Xi[n]`` for ``0 <= l <= max_steps``."""
    W = np.zeros((max_steps + 1, system.d, system.d))
    for _, L, X in _xi_by_steps(system, ks, max_steps):
        W[L] += X
    return W


def flow(system: DelaySystem, x0: SampledSignal, T, approximate: bool = False) -> SampledSignal:
    """Free evolution ``x_T`` of the initial function (zero input).

    For ``T + s >= 0`` the value is the finite sum over pairs ``(n, j)``
    with ``-L_j <= T + s - L.n < 0`` of ``Xi[n - e_j] A_j x0(T + s - L.n)``;
    for ``T + s < 0`` it is ``x0(T + s)``.
    """
    h = x0.h
    ks = delay_steps(system, h, approximate)
    KN = ks[-1]
    K = _steps(T, h, "T", approximate)
    table = _xi_by_steps(system, ks, K + KN)
    terms: dict = {}
    index = {n: X for n, _, X in table}
    for n, L, _ in table:
        for j, k in enumerate(ks):
            if n[j] == 0:
                continue
            prev = n[:j] + (n[j] - 1,) + n[j + 1:]
            M = index[prev] @ system.A[j]
            key = (L, k)
            terms[key] = terms.get(key, 0) + M
    out = np.zeros((KN + 1, system.d))
    for i in range(KN + 1):
        t = K - KN + i
        if t < 0:
            out[i] = x0.samples[t + KN]
            continue
        acc = np.zeros(system.d)
        for (L, k), M in terms.items():
            r = t - L
            if -k <= r < 0:
                acc += M @ x0.samples[r + KN]
        out[i] = acc
    return SampledSignal(-KN * h, 0.0, h, out)


def endpoint(system: DelaySystem, u: SampledSignal, T, approximate: bool = False) -> SampledSignal:
    """Forced response ``(E(T)u)(s) = sum_{L.n <= T+s} Xi[n] B u(T + s - L.n)``."""
    h = u.h
    ks = delay_steps(system, h, approximate)
    KN = ks[-1]
    K = _steps(T, h, "T", approximate)
    if u.samples.shape[0] < K + 1:
        raise ValueError("u is shorter than the horizon T")
    W = impulse_kernel(system, ks, K)
    WB = W @ system.B
    out = np.zeros((KN + 1, system.d))
    for i in range(KN + 1):
        t = K - KN + i
        if t < 0:
            continue
        out[i] = np.einsum("lij,lj->i", WB[:t + 1], u.samples[t::-1][:t + 1])
    return SampledSignal(-KN * h, 0.0, h, out)


def variation_of_constants_check(system: DelaySystem, x0: SampledSignal, u: SampledSignal,
                                  T) -> float:
    """Max-abs gap between simulation and ``flow(T) x0 + endpoint(T) u``."""
    h = x0.h
    ks = delay_steps(system, h)
    KN = ks[-1]
    K = _steps(T, h, "T")
    u_T = SampledSignal(0.0, K * h, h, u.samples[:K + 1])
    sim = simulate(system, x0, u_T)
    window = sim.samples[K:K + KN + 1]
    pred = flow(system, x0, T).samples + endpoint(system, u_T, T).samples
    return float(np.max(np.abs(window - pred)))


# -- range saturation ----------------------------------------------------------

def split_window(system: DelaySystem) -> float:
    """Smallest positive gap among the values ``L.k`` with ``|k| <= d + 1``."""
    vals = set()
    for total in range(system.d + 2):
        for k in multi_indices(system.N, total):
            if system.all_exact:
                vals.add(sum(a * b for a, b in zip(k, system.exact_delays)))
            else:
                vals.add(round(sum(a * b for a, b in zip(k, system.delays)), 12))
    vals = sorted(float(v) for v in vals)
    gaps = [b - a for a, b in zip(vals, vals[1:]) if b - a > 1e-12]
    return min(gaps)


@dataclass(frozen=True, eq=False)
class SaturationSplit:
    """Inputs on ``[0, d L_N]`` reproducing ``E(T) u`` as ``E(dL_N)(u1 + u2)``."""

    u1: SampledSignal
    u2: SampledSignal
    residual: float
    window: float


def saturation_split(system: DelaySystem, u: SampledSignal, T, coeffs: dict | None = None,
                     reject_above: float = 1e-9) -> SaturationSplit:
    """Split an input over ``[0, T]`` into two inputs over ``[0, d L_N]``.

    ``u1(s) = u(s + T - dL_N)`` and ``u2(s) = -sum alpha_k u(s - L.k + T - dL_N)``
    over ``0 < |k| <= d`` with ``s < L.k <= s + T - dL_N``.  Requires
    ``dL_N <= T <= dL_N + delta`` with ``delta`` from :func:`split_window`.
    """
    coeffs = ch_coefficients(system) if coeffs is None else coeffs
    h = u.h
    d = system.d
    ks = delay_steps(system, h)
    KN = ks[-1]
    K0 = d * KN
    K = _steps(T, h, "T")
    delta = split_window(system)
    D = K - K0
    if D < 0 or D * h > delta * (1 + 1e-12):
        raise WindowError(f"T={float(T)} outside [{K0 * h}, {K0 * h + delta}]")
    if u.samples.shape[0] < K + 1:
        raise ValueError("u is shorter than the horizon T")
    us = u.samples
    u1 = us[D:D + K0 + 1].copy()
    u2 = np.zeros_like(u1)
    for key, a in coeffs.items():
        if sum(key) == 0:
            continue
        Lk = sum(x * y for x, y in zip(key, ks))
        for i in range(K0 + 1):
            if i < Lk <= i + D:
                u2[i] -= float(a) * us[i - Lk + D]
    s1 = SampledSignal(0.0, K0 * h, h, u1)
    s2 = SampledSignal(0.0, K0 * h, h, u2)
    lhs = endpoint(system, SampledSignal(0.0, K * h, h, us[:K + 1]), K * h).samples
    rhs = endpoint(system, s1, K0 * h).samples + endpoint(system, s2, K0 * h).samples
    res = float(np.max(np.abs(lhs - rhs)))
    scale = 1.0 + float(np.max(np.abs(lhs)))
    if res > reject_above * scale:
        raise SplitRejected(f"split residual {res:.3e} exceeds {reject_above:g}")
    return SaturationSplit(s1, s2, res, delta)


def endpoint_matrix(system: DelaySystem, T, h) -> np.ndarray:
    """Matrix of ``u -> E(T) u`` on the samples that carry mass.

    Columns index input samples ``u_0 .. u_{K-1}`` (``m`` each); rows index
    output samples on ``[-L_N, 0)`` (``d`` each).
    """
    ks = delay_steps(system, h)
    KN = ks[-1]
    K = _steps(T, h, "T")
    d, m = system.d, system.m
    WB = impulse_kernel(system, ks, max(K, 0)) @ system.B
    M = np.zeros((KN * d, max(K, 0) * m))
    for i in range(KN):
        t = K - KN + i
        for c in range(min(t + 1, K)):
            if t < 0:
                break
            M[i * d:(i + 1) * d, c * m:(c + 1) * m] = WB[t - c]
    return M


def _rank(M: np.ndarray, tol: float) -> int:
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


@dataclass(frozen=True)
class SaturationEntry:
    T: float
    rank: int
    contained_in_ref: bool
    contains_ref: bool


@dataclass(frozen=True)
class SaturationReport:
    """Ranks of ``E(T)`` against the reference horizon ``d L_N``."""

    reference_T: float
    reference_rank: int
    output_dim: int
    entries: tuple
    saturated: bool
    monotone_below: bool

    @property
    def full_rank(self) -> bool:
        return self.reference_rank == self.output_dim


def range_saturation_check(system: DelaySystem, config: AnalysisConfig, Ts=None) -> SaturationReport:
    """Compare ``Ran E(T)`` with ``Ran E(d L_N)`` on a sampled grid.

    Needs commensurable delays whose common step is a multiple of ``h``.
    By default checks ``T = d L_N + k * step`` for ``k = 1, 2, 3`` and all
    multiples of the step in ``(0, d L_N)``.
    """
    dc = commensurability(system)
    if dc.kind != "commensurable":
        raise GridError("range saturation check needs commensurable delays")
    h = config.h
    ks = delay_steps(system, h)
    KN = ks[-1]
    d = system.d
    step_units = _steps(dc.step, h, "delay step")
    K0 = d * KN
    if Ts is None:
        Ks = [k * step_units for k in range(1, K0 // step_units)] + [K0 + k * step_units for k in (1, 2, 3)]
    else:
        Ks = [_steps(T, h, "T") for T in Ts]
    hf = float(h)
    ref = endpoint_matrix(system, K0 * hf if not isinstance(h, Fraction) else K0 * h, h)
    r_ref = _rank(ref, config.tol)
    entries = []
    for K in sorted(set(Ks)):
        Tk = K * h
        M = endpoint_matrix(system, Tk, h)
        r = _rank(M, config.tol)
        joint = _rank(np.hstack([ref, M]), config.tol)
        entries.append(SaturationEntry(float(Tk), r, joint == r_ref, joint == r))
    above = [e for e in entries if e.T > K0 * hf - 1e-12]
    below = [e for e in entries if e.T < K0 * hf - 1e-12]
    saturated = all(e.rank == r_ref and e.contained_in_ref and e.contains_ref for e in above)
    ranks = [e.rank for e in below] + [r_ref]
    monotone = all(a <= b for a, b in zip(ranks, ranks[1:]))
    return SaturationReport(K0 * hf, r_ref, KN * d, tuple(entries), saturated, monotone)
