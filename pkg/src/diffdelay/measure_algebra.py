"""Matrix-weighted Dirac combs and the convolution algebra they generate.

The system is realized by the measures

    Q = delta_{-L_N} I - sum_j delta_{-L_N + L_j} A_j,    P = B delta_0,

with ``Q^{-1} = delta_{L_N} * sum_n (sum_j delta_{L_j} A_j)^n`` and transfer
measure ``A = Q^{-1} * P``.  Measures live either in exact mode (Fraction
locations and weights) or float mode (locations clustered at a tolerance).
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._exact import frac_array, frac_eye, frac_zeros, solve_exact, exact_rank, to_fraction
from .core import DelaySystem, ValidationError, augment, commensurability

CLUSTER_TOL = 1e-12
DROP_TOL = 1e-15


class ClusterError(ValueError):
    """Two float locations are too close to be merged or kept apart safely."""


class SupportError(ValueError):
    """A measure is not supported where an operation requires."""


class StateError(ValueError):
    """A motion-planning target is not a state of the system."""


def _is_zero(w: np.ndarray, exact: bool, drop_tol: float) -> bool:
    if exact:
        return all(v == 0 for v in w.ravel())
    return w.size == 0 or float(np.max(np.abs(w))) < drop_tol


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Finite sum ``sum_i delta_{locs[i]} weights[i]`` of matrix weights.

    Use :meth:`build` to construct; it sorts, merges coincident locations
    and drops zero atoms.
    """

    locs: tuple
    weights: tuple
    shape: tuple
    exact: bool

    @classmethod
    def build(cls, atoms, shape, exact: bool, tol: float = CLUSTER_TOL,
              drop_tol: float = DROP_TOL) -> "AtomicMeasure":
        shape = (int(shape[0]), int(shape[1]))
        items = []
        for loc, w in atoms:
            if exact:
                loc = to_fraction(loc)
                w = frac_array(np.asarray(w, dtype=object).reshape(shape))
            else:
                loc = float(loc)
                if not np.isfinite(loc):
                    raise ValueError("non-finite atom location")
                w = np.asarray(w).reshape(shape)
                w = w.astype(complex if np.iscomplexobj(w) else float)
            items.append((loc, w))
        items.sort(key=lambda t: t[0])
        locs: list = []
        weights: list = []
        for loc, w in items:
            if locs and (loc == locs[-1] or
                         (not exact and abs(loc - locs[-1]) <= tol * max(1.0, abs(loc)))):
                weights[-1] = weights[-1] + w
                continue
            if locs and not exact and abs(loc - locs[-1]) <= 10 * tol * max(1.0, abs(loc)):
                raise ClusterError(f"atom locations {locs[-1]!r} and {loc!r} are ambiguously close")
            locs.append(loc)
            weights.append(w)
        keep = [i for i, w in enumerate(weights) if not _is_zero(w, exact, drop_tol)]
        return cls(tuple(locs[i] for i in keep), tuple(weights[i] for i in keep), shape, exact)

    @classmethod
    def zero(cls, shape, exact: bool = True) -> "AtomicMeasure":
        return cls((), (), (int(shape[0]), int(shape[1])), exact)

    @classmethod
    def dirac(cls, loc, weight, exact: bool | None = None) -> "AtomicMeasure":
        w = np.atleast_2d(np.asarray(weight, dtype=object if exact else None))
        if exact is None:
            exact = w.dtype == object or np.issubdtype(w.dtype, np.integer)
        return cls.build([(loc, w)], w.shape, exact)

    def __len__(self) -> int:
        return len(self.locs)

    @property
    def is_zero(self) -> bool:
        return not self.locs

    def to_float(self) -> "AtomicMeasure":
        if not self.exact:
            return self
        return AtomicMeasure.build([(float(l), w.astype(float)) for l, w in zip(self.locs, self.weights)],
                                   self.shape, False)

    def atoms(self):
        return list(zip(self.locs, self.weights))

    def weight_at(self, loc) -> np.ndarray:
        """Weight at ``loc`` (zero matrix if there is no atom)."""
        for l, w in zip(self.locs, self.weights):
            if l == loc or (not self.exact and abs(float(l) - float(loc)) <= CLUSTER_TOL * max(1.0, abs(float(l)))):
                return w
        return frac_zeros(self.shape) if self.exact else np.zeros(self.shape)

    def restrict(self, lo=None, hi=None, lo_open: bool = False, hi_open: bool = False) -> "AtomicMeasure":
        """Atoms with ``lo <= loc <= hi`` (strict on open ends)."""
        def ok(l):
            if lo is not None and (l < lo or (lo_open and l == lo)):
                return False
            if hi is not None and (l > hi or (hi_open and l == hi)):
                return False
            return True
        keep = [i for i, l in enumerate(self.locs) if ok(l)]
        return AtomicMeasure(tuple(self.locs[i] for i in keep), tuple(self.weights[i] for i in keep),
                             self.shape, self.exact)

    def shift(self, s) -> "AtomicMeasure":
        s = to_fraction(s) if self.exact else float(s)
        return AtomicMeasure.build([(l + s, w) for l, w in self.atoms()], self.shape, self.exact)

    def column(self, j: int) -> "AtomicMeasure":
        return AtomicMeasure.build([(l, w[:, j:j + 1]) for l, w in self.atoms()],
                                   (self.shape[0], 1), self.exact)

    def max_norm(self) -> float:
        """Largest absolute weight entry over all atoms."""
        if self.is_zero:
            return 0.0
        return max(float(max(abs(v) for v in w.ravel())) for w in self.weights)

    def support(self) -> tuple:
        if self.is_zero:
            return (None, None)
        return (self.locs[0], self.locs[-1])

    def __add__(self, other: "AtomicMeasure") -> "AtomicMeasure":
        a, b = _common(self, other)
        if a.shape != b.shape:
            raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
        return AtomicMeasure.build(a.atoms() + b.atoms(), a.shape, a.exact)

    def __neg__(self) -> "AtomicMeasure":
        return AtomicMeasure(self.locs, tuple(-w for w in self.weights), self.shape, self.exact)

    def __sub__(self, other: "AtomicMeasure") -> "AtomicMeasure":
        return self + (-other)

    def scale(self, c) -> "AtomicMeasure":
        if self.exact and isinstance(c, (int, Fraction)):
            c = Fraction(c)
            return AtomicMeasure.build([(l, w * c) for l, w in self.atoms()], self.shape, True)
        m = self.to_float()
        return AtomicMeasure.build([(l, w * c) for l, w in m.atoms()], m.shape, False)

    def left_mul(self, M) -> "AtomicMeasure":
        """Multiply every weight on the left by a constant matrix."""
        M = np.asarray(M, dtype=object if self.exact else None)
        if self.exact:
            M = frac_array(M)
        return AtomicMeasure.build([(l, M @ w) for l, w in self.atoms()], (M.shape[0], self.shape[1]), self.exact)


def _common(a: AtomicMeasure, b: AtomicMeasure):
    if a.exact == b.exact:
        return a, b
    return a.to_float(), b.to_float()


def convolve(a: AtomicMeasure, b: AtomicMeasure, upto=None) -> AtomicMeasure:
    """Convolution ``a * b``; optionally drop atoms located beyond ``upto``."""
    a, b = _common(a, b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner shapes differ: {a.shape} * {b.shape}")
    atoms = []
    for la, wa in zip(a.locs, a.weights):
        for lb, wb in zip(b.locs, b.weights):
            loc = la + lb
            if upto is not None and loc > upto:
                break
            atoms.append((loc, wa @ wb))
    return AtomicMeasure.build(atoms, (a.shape[0], b.shape[1]), a.exact)


def truncate_pi(a: AtomicMeasure) -> AtomicMeasure:
    """Keep the atoms at strictly positive locations."""
    return a.restrict(lo=0, lo_open=True)


def measure_laplace(a: AtomicMeasure, p: complex) -> np.ndarray:
    """Two-sided Laplace transform ``sum_i W_i exp(-p loc_i)``."""
    out = np.zeros(a.shape, dtype=complex)
    for l, w in zip(a.locs, a.weights):
        out += np.exp(-complex(p) * float(l)) * np.asarray(w, dtype=complex)
    return out


# -- the system's measures ------------------------------------------------------

def _exact_mode(system: DelaySystem, exact: bool | None) -> bool:
    if exact is None:
        return system.all_exact
    if exact and not system.all_exact:
        raise ValueError("exact mode needs exact rational delays")
    return exact


def _delays(system: DelaySystem, exact: bool) -> tuple:
    return tuple(system.exact_delays) if exact else tuple(system.delays)


def _mats(system: DelaySystem, exact: bool):
    return (system.A_exact, system.B_exact) if exact else (system.A, system.B)


def q_of(system: DelaySystem, exact: bool | None = None) -> AtomicMeasure:
    exact = _exact_mode(system, exact)
    lam = _delays(system, exact)
    As, _ = _mats(system, exact)
    I = frac_eye(system.d) if exact else np.eye(system.d)
    atoms = [(-lam[-1], I)] + [(-lam[-1] + l, -A) for l, A in zip(lam, As)]
    return AtomicMeasure.build(atoms, (system.d, system.d), exact)


def p_of(system: DelaySystem, exact: bool | None = None) -> AtomicMeasure:
    exact = _exact_mode(system, exact)
    _, B = _mats(system, exact)
    return AtomicMeasure.build([(0, B)], B.shape, exact)


def q_inverse_truncated(system: DelaySystem, horizon, exact: bool | None = None) -> AtomicMeasure:
    """Neumann series for ``Q^{-1}`` keeping atoms located at most ``horizon``.

    The atom at ``L_N + n . L`` carries ``Xi[n]``.  Atoms are generated in
    increasing location so that every kept weight is complete.
    """
    exact = _exact_mode(system, exact)
    lam = _delays(system, exact)
    As, _ = _mats(system, exact)
    horizon = to_fraction(horizon) if exact else float(horizon)
    if horizon < lam[-1]:
        raise ValueError(f"horizon {float(horizon)} is shorter than the first atom at {float(lam[-1])}")
    d = system.d
    I = frac_eye(d) if exact else np.eye(d)
    # Each pending location accumulates sum_j A_j W(loc - L_j) before it is popped.
    pending = {lam[-1]: I}
    heap = [lam[-1]]
    atoms = []
    while heap:
        loc = heapq.heappop(heap)
        w = pending.pop(loc)
        atoms.append((loc, w))
        for l, A in zip(lam, As):
            nxt = loc + l
            if nxt > horizon:
                continue
            if not exact:
                nxt = _snap(pending, nxt)
            if nxt in pending:
                pending[nxt] = pending[nxt] + A @ w
            else:
                pending[nxt] = A @ w
                heapq.heappush(heap, nxt)
    return AtomicMeasure.build(atoms, (d, d), exact)


def _snap(pending: dict, loc: float) -> float:
    for k in pending:
        if abs(k - loc) <= CLUSTER_TOL * max(1.0, abs(loc)):
            return k
    return loc


def transfer_truncated(system: DelaySystem, horizon, exact: bool | None = None) -> AtomicMeasure:
    """``A = Q^{-1} * P`` up to ``horizon``."""
    return convolve(q_inverse_truncated(system, horizon, exact), p_of(system, exact))


def neumann_residual(system: DelaySystem, horizon, exact: bool | None = None) -> float:
    """Max-norm of ``Q * Q^{-1}_trunc - delta_0 I`` on atoms at most ``horizon - L_N``."""
    exact = _exact_mode(system, exact)
    Qi = q_inverse_truncated(system, horizon, exact)
    lam = _delays(system, exact)
    defect = convolve(q_of(system, exact), Qi) - AtomicMeasure.build(
        [(0, frac_eye(system.d) if exact else np.eye(system.d))], (system.d, system.d), exact)
    hi = (to_fraction(horizon) if exact else float(horizon)) - lam[-1]
    return defect.restrict(hi=hi).max_norm()


# -- Bezout ------------------------------------------------------------------------

def _check_nonpositive(mu: AtomicMeasure, name: str, tol: float = 0.0):
    if not mu.is_zero and float(mu.locs[-1]) > tol:
        raise SupportError(f"{name} has an atom at {float(mu.locs[-1])} > 0")


def bezout_residual(system: DelaySystem, R: AtomicMeasure, S: AtomicMeasure, horizon=None) -> float:
    """Max-norm of ``Q*R + P*S - delta_0 I`` over atoms at or right of ``-horizon``.

    ``R`` (``d x d``) and ``S`` (``m x d``) must be supported in the
    nonpositive half-line.  ``horizon=None`` checks every atom.
    """
    d, m = system.d, system.m
    if R.shape != (d, d) or S.shape != (m, d):
        raise ValueError(f"R must be {d}x{d} and S {m}x{d}, got {R.shape} and {S.shape}")
    _check_nonpositive(R, "R")
    _check_nonpositive(S, "S")
    exact = system.all_exact and R.exact and S.exact
    Q, P = q_of(system, exact), p_of(system, exact)
    eye = AtomicMeasure.build([(0, frac_eye(d) if exact else np.eye(d))], (d, d), exact)
    defect = convolve(Q, R) + convolve(P, S) - eye
    if horizon is not None:
        defect = defect.restrict(lo=-(to_fraction(horizon) if defect.exact else float(horizon)))
    return defect.max_norm()


@dataclass(frozen=True)
class NoSolution:
    """Bezout identity unsolvable: ``[Q~(z), B]`` loses rank at ``z``.

    ``z`` is the value of the shift ``exp(p * step)``; ``p`` a matching
    frequency (None for ``z = 0``).
    """

    z: complex
    p: complex | None
    reason: str


@dataclass(frozen=True, eq=False)
class BezoutPair:
    R: AtomicMeasure
    S: AtomicMeasure
    degree: int
    step: Fraction


def _poly_blocks(system: DelaySystem, ks) -> list:
    """Coefficients ``C_k`` of ``Q~(s) = s^K I - sum_j s^{K - k_j} A_j``."""
    d = system.d
    K = ks[-1]
    C = [frac_zeros((d, d)) for _ in range(K + 1)]
    C[K] = C[K] + frac_eye(d)
    for k, A in zip(ks, system.A_exact):
        C[K - k] = C[K - k] - A
    return C


def pbh_witness(system: DelaySystem) -> NoSolution | None:
    """Point where ``[Q~(z), B]`` drops rank, or None if there is none."""
    from .frequency import controllable_subspace

    dc = commensurability(system)
    if dc.kind != "commensurable" or not system.all_exact:
        raise ValidationError("not_commensurable", "the polynomial Bezout reduction needs exact commensurable delays")
    if exact_rank(np.hstack([system.A_exact[-1], system.B_exact])) < system.d:
        return NoSolution(0j, None, "rank[A_N, B] < d (z = 0)")
    aug = augment(system, dc)
    cs = controllable_subspace(aug.A_exact, aug.B_exact)
    for lam in cs.uncontrollable_eigenvalues:
        if abs(lam) > 1e-12:
            z = complex(lam)
            return NoSolution(z, complex(np.log(z)) / float(dc.step), "uncontrollable mode of the lifted pair")
    return None


def bezout_construct_commensurable(system: DelaySystem, max_degree: int | None = None):
    """Exact Bezout pair on the grid ``-step * N`` or a :class:`NoSolution`.

    With ``s = delta_{-step}``, ``Q = Q~(s)`` and ``P = B``; the identity
    ``Q~(s) R(s) + B S(s) = I`` is solved for matrix polynomials of
    increasing degree by exact linear algebra on coefficient blocks.
    """
    witness = pbh_witness(system)
    if witness is not None:
        return witness
    dc = commensurability(system)
    ks = dc.multiples
    K = ks[-1]
    d, m = system.d, system.m
    C = _poly_blocks(system, ks)
    B = system.B_exact
    cap = d * K + K if max_degree is None else max_degree
    for D in range(cap + 1):
        # R has degree D, S degree D + K; coefficient blocks 0 .. D + K.
        rows = d * (D + K + 1)
        ncols = d * (D + 1) + m * (D + K + 1)
        M = frac_zeros((rows, ncols))
        for i in range(D + 1):
            for k in range(K + 1):
                M[(i + k) * d:(i + k + 1) * d, i * d:(i + 1) * d] = C[k]
        off = d * (D + 1)
        for i in range(D + K + 1):
            M[i * d:(i + 1) * d, off + i * m:off + (i + 1) * m] = B
        rhs = frac_zeros((rows, d))
        rhs[:d, :] = frac_eye(d)
        sol = solve_exact(M, rhs)
        if sol is None:
            continue
        step = Fraction(dc.step)
        R = AtomicMeasure.build([(-i * step, sol[i * d:(i + 1) * d]) for i in range(D + 1)], (d, d), True)
        S = AtomicMeasure.build([(-i * step, sol[off + i * m:off + (i + 1) * m]) for i in range(D + K + 1)],
                                (m, d), True)
        return BezoutPair(R, S, D, step)
    raise RuntimeError(f"no Bezout pair up to degree {cap} although the rank test passed")


# -- motion planning -------------------------------------------------------------

def extend_state(system: DelaySystem, psi: AtomicMeasure, horizon) -> AtomicMeasure:
    """Extend atoms on ``(0, L_N]`` to the state satisfying ``pi(Q * y) = 0``.

    Atoms of ``psi`` outside ``(0, L_N]`` are ignored.  The extension obeys
    ``y(s) = sum_j A_j y(s - L_j)`` for ``s > L_N`` and is cut at ``horizon``.
    """
    exact = psi.exact and system.all_exact
    lam = _delays(system, exact)
    As, _ = _mats(system, exact)
    seed = psi.restrict(lo=0, hi=lam[-1], lo_open=True)
    if not exact:
        seed = seed.to_float()
        horizon = float(horizon)
    else:
        horizon = to_fraction(horizon)
    pending = {l: w for l, w in seed.atoms()}
    heap = list(pending)
    heapq.heapify(heap)
    atoms = []
    while heap:
        loc = heapq.heappop(heap)
        w = pending.pop(loc)
        atoms.append((loc, w))
        for l, A in zip(lam, As):
            nxt = loc + l
            if nxt <= lam[-1] or nxt > horizon:
                continue
            if not exact:
                nxt = _snap(pending, nxt)
            if nxt in pending:
                pending[nxt] = pending[nxt] + A @ w
            else:
                pending[nxt] = A @ w
                heapq.heappush(heap, nxt)
    return AtomicMeasure.build(atoms, psi.shape, exact)


def state_residual(system: DelaySystem, psi: AtomicMeasure, window) -> float:
    """Max-norm of ``pi(Q * pi psi)`` on ``(0, window - L_N]``."""
    exact = psi.exact and system.all_exact
    lam = _delays(system, exact)
    w = to_fraction(window) if exact else float(window)
    return truncate_pi(convolve(q_of(system, exact), truncate_pi(psi))).restrict(hi=w - lam[-1]).max_norm()


@dataclass(frozen=True, eq=False)
class MotionPlan:
    """Control ``omega = S * Q * Psi`` and its window bookkeeping.

    ``valid_upto`` is the right end of the locations where ``omega`` is
    fully determined by ``Psi`` restricted to the window.
    """

    omega: AtomicMeasure
    window: float
    valid_upto: float
    state_residual: float
    positive_residual: float


def motion_plan(system: DelaySystem, R: AtomicMeasure, S: AtomicMeasure, psi: AtomicMeasure,
                window, tol: float = 1e-10, bezout_tol: float = 1e-12) -> MotionPlan:
    """Control steering the origin to the state ``pi psi``.

    Parameters
    ----------
    system : DelaySystem
    R, S : AtomicMeasure
        Bezout pair supported in the nonpositive half-line.
    psi : AtomicMeasure
        Target (``d x 1``) known on ``[0, window]``.
    window : float or Fraction
        Right end of the interval on which ``psi`` is given.
    tol : float
        Threshold for the state precondition and for the positive part of
        ``omega`` on the window where it is determined.
    """
    d = system.d
    if psi.shape[0] != d:
        raise ValueError(f"target must have {d} rows")
    res = bezout_residual(system, R, S)
    if res > bezout_tol:
        raise StateError(f"(R, S) is not a Bezout pair: residual {res:.3g}")
    if not psi.is_zero and float(psi.locs[0]) < 0:
        raise SupportError("target must be supported in the nonnegative half-line")
    exact = psi.exact and S.exact and system.all_exact
    lam = _delays(system, exact)
    W = to_fraction(window) if exact else float(window)
    span = -S.locs[0] if not S.is_zero else 0
    if not exact:
        span = float(span)
    if W < lam[-1] + span:
        raise ValueError(f"window {float(W)} is shorter than L_N + |supp S| = {float(lam[-1] + span)}")
    sres = state_residual(system, psi, W)
    if sres > tol:
        raise StateError(f"target is not a state: pi(Q * pi psi) has norm {sres:.3g} on the window")
    psi_w = psi.restrict(hi=W)
    if not exact:
        psi_w = psi_w.to_float()
    omega = convolve(convolve(S, q_of(system, exact)), psi_w)
    valid = W - lam[-1] - span
    pos = omega.restrict(lo=0, hi=valid, lo_open=True).max_norm()
    if pos > tol:
        raise StateError(f"omega has mass {pos:.3g} at positive times inside the valid window")
    return MotionPlan(omega.restrict(hi=0), float(W), float(valid), float(sres), float(pos))


def round_trip_residual(system: DelaySystem, omega: AtomicMeasure, psi: AtomicMeasure, window) -> float:
    """Max-norm of ``pi(A * omega) - pi psi`` on ``(0, window]``."""
    exact = omega.exact and psi.exact and system.all_exact
    W = to_fraction(window) if exact else float(window)
    span = -omega.locs[0] if not omega.is_zero else 0
    A = transfer_truncated(system, W + span, exact)
    out = truncate_pi(convolve(A, omega)).restrict(hi=W)
    target = truncate_pi(psi).restrict(hi=W)
    return (out - target).max_norm()


def simulate_plan(system: DelaySystem, omega: AtomicMeasure, h, horizon):
    """Simulate ``omega`` as a sampled impulse train on the grid ``h``.

    Returns ``(s, y)`` with ``y[i] = h * x`` at the output location
    ``s[i]`` in ``(0, horizon]``, comparable with the weights of
    ``pi(A * omega)``.  The control is shifted to start at time 0.
    """
    from .time_domain import SampledSignal, simulate

    hf = to_fraction(h)
    lam_N = system.exact_delays[-1] if system.exact_delays[-1] is not None else to_fraction(system.delays[-1])
    t0 = -to_fraction(omega.locs[0]) if not omega.is_zero and omega.locs[0] < 0 else Fraction(0)
    horizon = to_fraction(horizon)
    T = t0 + horizon - lam_N
    K = T / hf
    if K.denominator != 1 or (t0 / hf).denominator != 1:
        raise ValueError("control support and horizon must lie on the grid h")
    K = int(K)
    u = np.zeros((K + 1, system.m))
    for l, w in omega.atoms():
        idx = (t0 + to_fraction(l)) / hf
        if idx.denominator != 1:
            raise ValueError(f"atom at {l} is off the grid h")
        u[int(idx)] += np.asarray(w, dtype=float)[:, 0] / float(hf)
    KN = int(lam_N / hf)
    x0 = SampledSignal(-float(lam_N), 0.0, float(hf), np.zeros((KN + 1, system.d)))
    sol = simulate(system, x0, SampledSignal(0.0, float(T), float(hf), u))
    # sample time t corresponds to output location s = t - t0 + L_N
    s = sol.times - float(t0) + float(lam_N)
    sel = (s > 1e-12) & (s <= float(horizon) + 1e-12)
    return s[sel], sol.samples[sel] * float(hf)


# -- text serialization ----------------------------------------------------------

def _fmt(v, exact: bool) -> str:
    if exact:
        v = Fraction(v)
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    return repr(float(v))


def dumps(mu: AtomicMeasure) -> str:
    """Text form: ``# shape r c`` then one ``location w11 w12 ...`` line per atom."""
    lines = [f"# shape {mu.shape[0]} {mu.shape[1]}"]
    for l, w in mu.atoms():
        lines.append(" ".join([_fmt(l, mu.exact)] + [_fmt(v, mu.exact) for v in np.asarray(w).ravel()]))
    return "\n".join(lines) + "\n"


def loads(text: str) -> AtomicMeasure:
    shape = None
    rows = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if parts and parts[0] == "shape":
                shape = (int(parts[1]), int(parts[2]))
            continue
        rows.append(line.split())
    if shape is None:
        raise ValueError("missing '# shape r c' header")
    n = shape[0] * shape[1]
    for r in rows:
        if len(r) != n + 1:
            raise ValueError(f"expected {n + 1} fields per atom line, got {len(r)}")
    exact = all(not any(c in tok.lower() for c in ".ein") for r in rows for tok in r)
    if exact:
        atoms = [(Fraction(r[0]), np.array([Fraction(t) for t in r[1:]], dtype=object)) for r in rows]
    else:
        atoms = [(float(Fraction(r[0]) if "/" in r[0] else r[0]),
                  np.array([float(Fraction(t)) if "/" in t else float(t) for t in r[1:]])) for r in rows]
    return AtomicMeasure.build(atoms, shape, exact)
