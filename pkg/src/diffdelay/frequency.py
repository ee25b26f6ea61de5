"""Frequency-domain controllability tests.

``H(p) = I - sum_j exp(-p L_j) A_j``.  Approximate controllability holds
iff ``rank [H(p), B] = d`` for every complex ``p`` and ``rank [A_N, B] = d``.
The necessary condition for exact controllability asks in addition for a
uniform positive lower bound on ``det(H H^* + B B^*)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

import numpy as np
from scipy.optimize import minimize

from ._exact import column_basis, exact_rank, frac_eye, solve_exact
from .core import DelayClass, DelaySystem, augment, commensurability
from .xi_algebra import ExpPolynomial, det_h_exppoly

log = logging.getLogger(__name__)


class Status(str, Enum):
    HOLDS = "Holds"
    FAILS = "Fails"
    INCONCLUSIVE = "Inconclusive"


class Mode(str, Enum):
    COMMENSURABLE = "CommensurableExact"
    TWO_DELAY = "TwoDelayAlgebraic"
    CLOSURE = "NumericClosure"


@dataclass(frozen=True)
class FrequencyConfig:
    """Numerical settings for the frequency-domain tests.

    ``grid_sigma`` and ``grid_phase`` give the initial grid of the
    certification search, ``max_evals`` bounds its total work and
    ``witness_tol`` is the margin below which a refined point counts as a
    zero.
    """

    grid_sigma: int = 12
    grid_phase: int = 16
    strip_pad: float = 0.5
    max_evals: int = 400_000
    witness_tol: float = 1e-9
    refine_iters: int = 4000
    rank_tol: float = 1e-10
    windows: int = 4
    divergence_threshold: float = 50.0

    def __post_init__(self):
        if self.grid_sigma < 2 or self.grid_phase < 2:
            raise ValueError("grids need at least two points per axis")
        if self.max_evals < 1000:
            raise ValueError("max_evals too small")
        if self.windows < 1:
            raise ValueError("windows must be >= 1")


# -- pointwise evaluation -------------------------------------------------------

def h_eval(system: DelaySystem, p) -> np.ndarray:
    """``H(p)``; a trailing ``d x d`` pair of axes is added for array input."""
    p = np.asarray(p, dtype=complex)
    out = np.broadcast_to(np.eye(system.d, dtype=complex), p.shape + (system.d, system.d)).copy()
    for L, A in zip(system.delays, system.A):
        out -= np.exp(-p * L)[..., None, None] * A
    return out


def q_hat_eval(system: DelaySystem, p) -> np.ndarray:
    """``exp(p L_N) I - sum_j exp(p (L_N - L_j)) A_j``, equal to ``exp(p L_N) H(p)``."""
    p = np.asarray(p, dtype=complex)
    LN = system.max_delay
    out = np.exp(p * LN)[..., None, None] * np.eye(system.d)
    for L, A in zip(system.delays, system.A):
        out = out - np.exp(p * (LN - L))[..., None, None] * A
    return out


def _margin_from_f(F: np.ndarray, B: np.ndarray) -> np.ndarray:
    M = F @ np.conj(np.swapaxes(F, -1, -2)) + (B @ B.T)
    det = np.linalg.det(M)
    return np.clip(det.real, 0.0, None)


def hautus_margin(system: DelaySystem, p) -> np.ndarray | float:
    """``det(H(p) H(p)^* + B B^*)``, clamped at zero."""
    out = _margin_from_f(h_eval(system, p), system.B)
    return float(out) if np.ndim(out) == 0 else out


def hautus_margin_raw(system: DelaySystem, p) -> complex:
    """Unclamped complex determinant, exposed for diagnostics."""
    F = h_eval(system, p)
    return complex(np.linalg.det(F @ F.conj().T + system.B @ system.B.T))


def _numeric_rank(M: np.ndarray, tol: float) -> int:
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol * max(1.0, s[0])))


@dataclass(frozen=True)
class RankResult:
    rank: int
    full: bool
    exact: bool


def rank_AN_B(system: DelaySystem, exact: bool = False, tol: float = 1e-10) -> RankResult:
    """Rank of ``[A_N, B]``."""
    if exact:
        r = exact_rank(np.hstack([system.A_exact[-1], system.B_exact]))
    else:
        r = _numeric_rank(np.hstack([system.A[-1], system.B]), tol)
    return RankResult(r, r == system.d, exact)


# -- strip bounds ---------------------------------------------------------------

@dataclass(frozen=True)
class Strip:
    """Outside ``beta1 <= Re p <= beta2`` one has ``|det H(p)|^2 >= rho``."""

    beta1: float
    beta2: float
    rho: float
    empty: bool = False
    degenerate: bool = False


def strip_bounds(system: DelaySystem, det_poly: ExpPolynomial | None = None) -> Strip:
    """Vertical strip containing every zero of ``det H``.

    Right of ``beta2`` the perturbation ``H - I`` has norm at most 1/2;
    left of ``beta1`` the term with the largest exponent dominates the
    others by a factor two.  The same bounds hold with independent phases
    on every exponential.
    """
    f = det_h_exppoly(system) if det_poly is None else det_poly
    d = system.d
    if not f.coeffs:
        return Strip(0.0, 0.0, 0.0, True, True)
    if f.is_constant:
        c = abs(complex(f.coeffs[0]))
        return Strip(0.0, 0.0, c * c, True, c == 0)
    S = sum(np.linalg.norm(A, 2) for A in system.A)
    beta2 = max(0.0, math.log(2 * S) / system.delays[0]) if S > 0 else 0.0
    Emax = f.exponents[-1]
    cmax = abs(complex(f.coeffs[-1]))
    others = [(e, abs(complex(c))) for e, c in zip(f.exponents[:-1], f.coeffs[:-1])]

    def ratio(sig):
        return sum(c / cmax * math.exp(sig * (Emax - e)) for e, c in others)

    lo, hi = -1.0, 0.0
    if ratio(0.0) <= 0.5:
        beta1 = 0.0
    else:
        while ratio(lo) > 0.5:
            hi = lo
            lo *= 2
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if ratio(mid) <= 0.5:
                lo = mid
            else:
                hi = mid
        beta1 = lo
    rho1 = (cmax * math.exp(-beta1 * Emax) / 2) ** 2
    rho = min(2.0 ** (-2 * d), rho1)
    return Strip(beta1, beta2, rho)


# -- verdict containers ---------------------------------------------------------

@dataclass(frozen=True)
class Witness:
    """Evidence for a failing condition.

    ``kind`` is ``"point"`` (complex frequency ``p``), ``"closure"``
    (``sigma`` and torus ``phases``) or ``"rank_AN_B"`` (left null vector
    of ``[A_N, B]``).  ``margin`` is the Hautus margin at the witness.
    """

    kind: str
    margin: float
    p: complex | None = None
    sigma: float | None = None
    phases: tuple | None = None
    vector: tuple | None = None


@dataclass(frozen=True)
class Verdict:
    status: Status
    mode: Mode | None
    witness: Witness | None = None
    alpha: float | None = None
    reason: str = ""
    details: dict = field(default_factory=dict)


def _rank_witness(system: DelaySystem) -> Witness:
    M = np.hstack([system.A[-1], system.B])
    U, s, _ = np.linalg.svd(M)
    g = U[:, -1]
    margin = float(np.clip(np.linalg.det(M @ M.T), 0, None))
    return Witness("rank_AN_B", margin, vector=tuple(complex(v) for v in g))


def closure_margin(system: DelaySystem, sigma, phases) -> np.ndarray:
    """``det(F F^* + B B^*)`` with ``F = I - sum_j exp(-sigma L_j + i phi_j) A_j``."""
    F = _f_matrix(system, np.atleast_1d(sigma), np.atleast_2d(phases))
    return _margin_from_f(F, system.B)


def _f_matrix(system: DelaySystem, sigma: np.ndarray, phases: np.ndarray) -> np.ndarray:
    lam = np.asarray(system.delays)
    coef = np.exp(-sigma[:, None] * lam[None, :] + 1j * phases)
    As = np.stack(system.A)
    return np.eye(system.d) - np.einsum("mj,jab->mab", coef, As)


def _smin(system: DelaySystem, sigma: np.ndarray, phases: np.ndarray) -> np.ndarray:
    F = _f_matrix(system, sigma, phases)
    Bb = np.broadcast_to(system.B, (F.shape[0],) + system.B.shape)
    return np.linalg.svd(np.concatenate([F, Bb], axis=2), compute_uv=False)[:, -1]


# -- certified search over a strip times a torus ---------------------------------

@dataclass(frozen=True)
class Certificate:
    """Outcome of the branch-and-bound search.

    ``status`` is ``"positive"`` (``smin_lower`` bounds the smallest singular
    value of ``[F, B]`` from below on the whole domain), ``"zero"``
    (a refined point with margin below tolerance) or ``"unknown"``.
    """

    status: str
    smin_lower: float | None
    best_value: float
    best_point: tuple
    evaluations: int


def _dexp(a: np.ndarray, sig: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Largest change of ``exp(a sigma)`` over ``[sig - h, sig + h]``."""
    c = np.exp(a * sig)
    return np.maximum(np.abs(np.exp(a * (sig - h)) - c), np.abs(np.exp(a * (sig + h)) - c))


def _cell_bounds(system, centers, halfw, phase_map, norms, absmap):
    """Smallest singular value at cell centers and Lipschitz contributions."""
    lam = np.asarray(system.delays)
    LN = lam[-1]
    sig = centers[:, 0][:, None]
    hsg = halfw[:, 0][:, None]
    scaled = (sig + hsg <= 0)
    a_j = np.where(scaled, LN - lam[None, :], -lam[None, :])
    a_0 = np.where(scaled[:, 0], LN, 0.0)
    w0 = np.exp(a_0 * sig[:, 0])
    wj = np.exp(a_j * sig)
    phases = centers[:, 1:] @ phase_map.T
    As = np.stack(system.A)
    F = w0[:, None, None] * np.eye(system.d) - np.einsum("mj,jab->mab", wj * np.exp(1j * phases), As)
    Bb = np.broadcast_to(system.B, (F.shape[0],) + system.B.shape)
    s = np.linalg.svd(np.concatenate([F, Bb], axis=2), compute_uv=False)[:, -1]
    c_sigma = _dexp(a_0, sig[:, 0], hsg[:, 0]) + _dexp(a_j, sig, hsg) @ norms
    c_t = (wj * norms) @ absmap * halfw[:, 1:]
    return s, c_sigma, c_t


def _refine(system, phase_map, x0, iters):
    r = phase_map.shape[1]

    def fun(x):
        ph = phase_map @ x[1:]
        return float(_smin(system, np.array([x[0]]), ph[None, :])[0])

    res = minimize(fun, np.asarray(x0, dtype=float), method="Nelder-Mead",
                   options={"xatol": 1e-14, "fatol": 1e-16, "maxiter": iters, "maxfev": iters})
    x = res.x
    ph = phase_map @ x[1:]
    g = float(closure_margin(system, x[0], ph[None, :])[0])
    return x, g


def certify_closure(system: DelaySystem, strip: Strip, phase_map: np.ndarray,
                    config: FrequencyConfig, sigma_range=None) -> Certificate:
    """Search ``sigma`` in the strip and ``t`` in ``[0, 2 pi)^r``.

    Phases are ``phi = phase_map @ t``.  Cell lower bounds use the Weyl
    inequality for singular values: the smallest singular value of
    ``[F, B]`` moves by at most ``||F(x) - F(center)||`` inside a cell.
    Cells left of ``sigma = 0`` work with ``exp(sigma L_N) F``, which stays
    bounded and whose ``[., B]`` has no larger smallest singular value.
    """
    phase_map = np.asarray(phase_map, dtype=float)
    r = phase_map.shape[1]
    norms = np.array([np.linalg.norm(A, 2) for A in system.A])
    absmap = np.abs(phase_map)
    s_lo, s_hi = sigma_range if sigma_range is not None else (strip.beta1, strip.beta2)
    if s_hi <= s_lo:
        s_hi = s_lo + 1e-3
    ns, nt = config.grid_sigma, config.grid_phase
    ht = math.pi / nt
    tc = ht * (1 + 2 * np.arange(nt))
    pieces = [(s_lo, 0.0), (0.0, s_hi)] if s_lo < 0 < s_hi else [(s_lo, s_hi)]
    cs, hw = [], []
    for a, b in pieces:
        n = max(2, int(round(ns * (b - a) / (s_hi - s_lo))))
        hs = (b - a) / (2 * n)
        sc = a + hs * (1 + 2 * np.arange(n))
        mesh = np.meshgrid(sc, *([tc] * r), indexing="ij")
        c = np.stack([m.ravel() for m in mesh], axis=1)
        cs.append(c)
        hw.append(np.tile(np.array([hs] + [ht] * r), (c.shape[0], 1)))
    centers = np.concatenate(cs)
    halfw = np.concatenate(hw)
    evals = 0
    best = (math.inf, None)
    refined = False
    accepted: list = []
    accepted_cells: list = []
    backup = 0.0
    target = 0.0
    polishing = False
    while True:
        if centers.shape[0] == 0:
            lows = [float(a.min()) for a in accepted if a.size]
            if not polishing and lows and best[0] > 0:
                # second pass: sharpen cells whose bound is far below the best value
                polishing = True
                target = 0.5 * best[0]
                keep_l, cs, hw = [], [], []
                for c, h_, l_ in accepted_cells:
                    sel = l_ < target
                    keep_l.append(l_[~sel])
                    cs.append(c[sel])
                    hw.append(h_[sel])
                accepted = keep_l
                accepted_cells = [(np.empty((0, 1 + r)), np.empty((0, 1 + r)), l_) for l_ in keep_l]
                centers = np.concatenate(cs)
                halfw = np.concatenate(hw)
                backup = min(lows)
                if centers.shape[0]:
                    continue
            lows = [float(a.min()) for a in accepted if a.size]
            return Certificate("positive", min(lows) if lows else best[0], best[0], tuple(best[1]), evals)
        if evals + centers.shape[0] > config.max_evals:
            if polishing:
                return Certificate("positive", backup, best[0], tuple(best[1]), evals)
            break
        s, c_sigma, c_t = _cell_bounds(system, centers, halfw, phase_map, norms, absmap)
        evals += centers.shape[0]
        k = int(np.argmin(s))
        if s[k] < best[0]:
            best = (float(s[k]), centers[k].copy())
        bound = c_sigma + c_t.sum(axis=1)
        lb = s - bound - 1e-12 * (1 + s)
        if not refined:
            refined = True
            for idx in np.argsort(s)[:3]:
                x, g = _refine(system, phase_map, centers[idx], config.refine_iters)
                if g <= config.witness_tol:
                    return Certificate("zero", None, g, tuple(x), evals)
        ok = lb > max(target, 0.0)
        if ok.any():
            accepted.append(lb[ok])
            accepted_cells.append((centers[ok], halfw[ok], lb[ok]))
        bad = ~ok
        centers, halfw = centers[bad], halfw[bad]
        if not bad.any():
            continue
        contrib = np.concatenate([c_sigma[bad][:, None], c_t[bad]], axis=1)
        axis = np.argmax(contrib, axis=1)
        rows = np.arange(centers.shape[0])
        halfw = halfw.copy()
        halfw[rows, axis] /= 2
        shift = np.zeros_like(centers)
        shift[rows, axis] = halfw[rows, axis]
        centers = np.concatenate([centers - shift, centers + shift])
        halfw = np.concatenate([halfw, halfw])
    x, g = _refine(system, phase_map, best[1], config.refine_iters)
    if g <= config.witness_tol:
        return Certificate("zero", None, g, tuple(x), evals)
    return Certificate("unknown", None, best[0], tuple(best[1]), evals)


# -- commensurable exact analysis -----------------------------------------------

@dataclass(frozen=True, eq=False)
class ControllableSubspace:
    basis: np.ndarray
    dim: int
    n: int
    uncontrollable_eigenvalues: tuple


def controllable_subspace(A: np.ndarray, B: np.ndarray) -> ControllableSubspace:
    """Exact Krylov subspace ``span{B, AB, A^2 B, ...}`` over the rationals.

    Also returns the eigenvalues (floating) of the map induced on the
    quotient, i.e. the uncontrollable modes.
    """
    n = A.shape[0]
    basis = column_basis(B) if B.size else B[:, :0]
    frontier = basis
    while frontier.shape[1] and basis.shape[1] < n:
        new = A @ frontier
        comb = column_basis(np.hstack([basis, new]))
        added = comb.shape[1] - basis.shape[1]
        if added == 0:
            break
        frontier = comb[:, basis.shape[1]:]
        basis = comb
    r = basis.shape[1]
    eig: tuple = ()
    if r < n:
        T = column_basis(np.hstack([basis, frac_eye(n)]))
        Abar = solve_exact(T, A @ T)
        block = Abar[r:, r:].astype(float)
        eig = tuple(complex(v) for v in np.linalg.eigvals(block))
    return ControllableSubspace(basis, r, n, eig)


def _point_witness(system: DelaySystem, p: complex, config: FrequencyConfig) -> Witness:
    m = hautus_margin(system, p)
    if m > config.witness_tol:
        def fun(x):
            M = np.hstack([h_eval(system, x[0] + 1j * x[1]), system.B])
            return float(np.linalg.svd(M, compute_uv=False)[-1])
        res = minimize(fun, [p.real, p.imag], method="Nelder-Mead",
                       options={"xatol": 1e-15, "fatol": 1e-17, "maxiter": 2000})
        q = complex(res.x[0], res.x[1])
        mq = hautus_margin(system, q)
        if mq < m:
            p, m = q, mq
    return Witness("point", float(m), p=complex(p))


def _commensurable_exact(system: DelaySystem, dc: DelayClass, config: FrequencyConfig) -> Verdict:
    rk = rank_AN_B(system, exact=True)
    if not rk.full:
        return Verdict(Status.FAILS, Mode.COMMENSURABLE, _rank_witness(system),
                       reason=f"rank [A_N, B] = {rk.rank} < d")
    aug = augment(system, dc)
    cs = controllable_subspace(aug.A_exact, aug.B_exact)
    details = {"augmented_dim": cs.n, "controllable_dim": cs.dim, "step": str(dc.step)}
    if cs.dim == cs.n:
        return Verdict(Status.HOLDS, Mode.COMMENSURABLE,
                       reason="lifted pair is controllable (exact rational Krylov rank)", details=details)
    step = float(dc.step)
    nonzero = [lam for lam in cs.uncontrollable_eigenvalues if abs(lam) > 1e-12]
    if not nonzero:
        return Verdict(Status.FAILS, Mode.COMMENSURABLE, _rank_witness(system),
                       reason="uncontrollable mode at zero", details=details)
    nonzero.sort(key=lambda z: (-abs(z), z.real, z.imag))
    wit = None
    for lam in nonzero:
        w = _point_witness(system, complex(np.log(lam)) / step, config)
        if wit is None or w.margin < wit.margin:
            wit = w
        if w.margin <= config.witness_tol:
            break
    details["uncontrollable_modes"] = [str(np.round(z, 12)) for z in cs.uncontrollable_eigenvalues]
    return Verdict(Status.FAILS, Mode.COMMENSURABLE, wit,
                   reason="lifted pair has uncontrollable modes", details=details)


# -- public verdicts ------------------------------------------------------------

_SHAPES_TWO_DELAY = {(2, 1), (3, 1)}


def _resolve_mode(system: DelaySystem, dc: DelayClass, mode: str) -> Mode | None:
    if mode == "auto":
        if dc.kind == "commensurable":
            return Mode.COMMENSURABLE
        if dc.kind == "mixed":
            return None
        if system.N == 2 and (system.d, system.m) in _SHAPES_TWO_DELAY:
            return Mode.TWO_DELAY
        return Mode.CLOSURE
    return {"commensurable": Mode.COMMENSURABLE, "two-delay": Mode.TWO_DELAY,
            "closure": Mode.CLOSURE}[mode]


def approx_verdict(system: DelaySystem, mode: str = "auto",
                   config: FrequencyConfig | None = None) -> Verdict:
    """Decide approximate controllability.

    Parameters
    ----------
    system : DelaySystem
    mode : {"auto", "commensurable", "two-delay", "closure"}
    config : FrequencyConfig, optional

    Returns
    -------
    Verdict
        ``Fails`` always carries a witness; ``Holds`` in commensurable mode
        rests on an exact rank computation and in closure mode on a
        certified positive lower bound of the margin.
    """
    config = config or FrequencyConfig()
    dc = commensurability(system)
    m = _resolve_mode(system, dc, mode)
    if m is None:
        return Verdict(Status.INCONCLUSIVE, None, reason=f"mixed delay dependence: {dc.note}")
    if m is Mode.COMMENSURABLE:
        if dc.kind != "commensurable":
            return Verdict(Status.INCONCLUSIVE, m, reason="delays are not exactly commensurable")
        return _commensurable_exact(system, dc, config)
    if m is Mode.TWO_DELAY:
        if system.N != 2 or (system.d, system.m) not in _SHAPES_TWO_DELAY or dc.kind != "independent":
            return Verdict(Status.INCONCLUSIVE, m,
                           reason="two-delay mode needs N=2, d in {2,3}, m=1 and independent delays")
        from .locus import classify_2x2, classify_3x3
        loc = classify_2x2(system, config) if system.d == 2 else classify_3x3(system, config)
        return loc.approx
    rk = rank_AN_B(system, tol=config.rank_tol)
    if not rk.full:
        return Verdict(Status.FAILS, m, _rank_witness(system), reason=f"rank [A_N, B] = {rk.rank} < d")
    cert, strip = _closure_certificate(system, config)
    if cert is not None and cert.status == "positive":
        return Verdict(Status.HOLDS, m, alpha=_alpha(system, strip, cert),
                       reason="closure margin certified positive", details={"evaluations": cert.evaluations})
    why = "closure margin vanishes; approximate controllability undecided" if cert and cert.status == "zero" \
        else "certification budget exhausted"
    return Verdict(Status.INCONCLUSIVE, m, reason=why)


def _alpha(system: DelaySystem, strip: Strip, cert: Certificate) -> float:
    return float(min(strip.rho if strip.rho > 0 else math.inf, cert.smin_lower ** (2 * system.d)))


def _closure_certificate(system: DelaySystem, config: FrequencyConfig, phase_map=None):
    strip = strip_bounds(system)
    if strip.degenerate:
        return None, strip
    if strip.empty:
        return Certificate("positive", 1.0, 1.0, (0.0,), 0), strip
    pm = np.eye(system.N) if phase_map is None else phase_map
    return certify_closure(system, strip, pm, config), strip


def exact_necessary_verdict(system: DelaySystem, mode: str = "auto",
                            config: FrequencyConfig | None = None) -> Verdict:
    """Check ``rank [A_N, B] = d`` and ``inf_p det(H H^* + B B^*) > 0``.

    For independent delays the infimum is taken over the closure
    ``{I - sum_j exp(-sigma L_j + i phi_j) A_j}``; for commensurable delays
    over the one-parameter family ``phi_j = -k_j theta``.
    """
    config = config or FrequencyConfig()
    dc = commensurability(system)
    m = _resolve_mode(system, dc, mode)
    if m is None:
        return Verdict(Status.INCONCLUSIVE, None, reason=f"mixed delay dependence: {dc.note}")
    if dc.kind == "commensurable" and m is not Mode.CLOSURE:
        base = _commensurable_exact(system, dc, config)
        if base.status is not Status.HOLDS:
            return base
        ks = np.array(dc.multiples, dtype=float)
        cert, strip = _closure_certificate(system, config, phase_map=-ks[:, None])
        alpha = _alpha(system, strip, cert) if cert is not None and cert.status == "positive" else None
        return Verdict(Status.HOLDS, Mode.COMMENSURABLE, alpha=alpha,
                       reason="image closure adds only H = I for commensurable delays", details=base.details)
    rk = rank_AN_B(system, tol=config.rank_tol)
    if not rk.full:
        return Verdict(Status.FAILS, Mode.CLOSURE, _rank_witness(system), reason=f"rank [A_N, B] = {rk.rank} < d")
    cert, strip = _closure_certificate(system, config)
    if cert is None:
        return Verdict(Status.INCONCLUSIVE, Mode.CLOSURE, reason="det H vanishes identically")
    if cert.status == "positive":
        return Verdict(Status.HOLDS, Mode.CLOSURE, alpha=_alpha(system, strip, cert),
                       reason="closure margin certified positive", details={"evaluations": cert.evaluations})
    if cert.status == "zero":
        x = cert.best_point
        w = Witness("closure", float(cert.best_value), sigma=float(x[0]), phases=tuple(float(v) for v in x[1:]))
        if dc.kind != "independent":
            return Verdict(Status.INCONCLUSIVE, Mode.CLOSURE, w,
                           reason="full-torus closure is larger than the true closure for dependent delays")
        return Verdict(Status.FAILS, Mode.CLOSURE, w, reason="closure margin reaches zero")
    return Verdict(Status.INCONCLUSIVE, Mode.CLOSURE, reason="certification budget exhausted",
                   details={"evaluations": cert.evaluations, "best_smin": cert.best_value})


# -- zeros of exponential polynomials ------------------------------------------

def _edge_winding(f: ExpPolynomial, a: complex, b: complex, n0: int = 64):
    n = n0
    for _ in range(12):
        t = np.linspace(0, 1, n + 1)
        with np.errstate(all="ignore"):
            vals = f(a + (b - a) * t)
        if np.any(vals == 0) or not np.all(np.isfinite(vals)):
            return None
        dphi = np.angle(vals[1:] / vals[:-1])
        if np.max(np.abs(dphi)) < math.pi / 4:
            return float(dphi.sum()), float(np.min(np.abs(vals)))
        n *= 2
    return None


def _winding(f, re0, re1, im0, im1):
    corners = [complex(re0, im0), complex(re1, im0), complex(re1, im1), complex(re0, im1)]
    total = 0.0
    for a, b in zip(corners, corners[1:] + corners[:1]):
        w = _edge_winding(f, a, b)
        if w is None:
            return None
        total += w[0]
    return int(round(total / (2 * math.pi)))


def _newton(f: ExpPolynomial, p: complex, iters: int = 60) -> complex | None:
    for _ in range(iters):
        with np.errstate(all="ignore"):
            v = complex(f(p))
            dv = complex(f.derivative(p))
        if dv == 0 or not (np.isfinite(v) and np.isfinite(dv)):
            return None
        step = v / dv
        p = p - step
        if abs(step) < 1e-15 * (1 + abs(p)):
            break
    return p


def exp_zeros(f: ExpPolynomial, re0: float, re1: float, im0: float, im1: float,
              min_size: float = 1e-6, max_depth: int = 60) -> list:
    """Zeros of ``f`` in a rectangle by the argument principle.

    Returns a list of ``(p, multiplicity)``.  Rectangles are bisected until
    they hold one zero, which is then polished by Newton's method.
    """
    out: list = []
    stack = [(re0, re1, im0, im1, 0)]
    while stack:
        a0, a1, b0, b1, depth = stack.pop()
        w = _winding(f, a0, a1, b0, b1)
        if w is None:
            ja = 1e-7 * (a1 - a0)
            jb = 1e-7 * (b1 - b0)
            stack.append((a0 - ja, a1 + ja, b0 - jb, b1 + jb, depth + 1))
            continue
        if w <= 0:
            continue
        size = max(a1 - a0, b1 - b0)
        if w == 1 or size < min_size or depth >= max_depth:
            c = complex(0.5 * (a0 + a1), 0.5 * (b0 + b1))
            z = _newton(f, c) if w == 1 else c
            pad = 1e-9 * (1 + size)
            if z is not None and a0 - pad <= z.real <= a1 + pad and b0 - pad <= z.imag <= b1 + pad:
                out.append((z, w))
                continue
            if size < min_size or depth >= max_depth:
                out.append((c, w))
                continue
        off = 0.5 + 0.0137
        if a1 - a0 >= b1 - b0:
            mid = a0 + off * (a1 - a0)
            stack += [(a0, mid, b0, b1, depth + 1), (mid, a1, b0, b1, depth + 1)]
        else:
            mid = b0 + off * (b1 - b0)
            stack += [(a0, a1, b0, mid, depth + 1), (a0, a1, mid, b1, depth + 1)]
    out.sort(key=lambda t: (t[0].imag, t[0].real))
    return out


def find_exp_zero(f: ExpPolynomial, sigma_range: tuple, height: float) -> complex | None:
    """Some zero of ``f`` with ``Re p`` in ``sigma_range``, ``0 <= Im p <= height``."""
    zs = exp_zeros(f, sigma_range[0], sigma_range[1], 0.0, height)
    return zs[0][0] if zs else None


# -- certificate along the zeros of det Q ---------------------------------------

@dataclass(frozen=True)
class CkReport:
    """Norms of ``(G_p B)^+ G_p`` along the zeros of ``det Q``."""

    zeros: tuple
    kernel_dims: tuple
    norms: tuple
    sup_norm: float
    divergent: bool
    window: tuple
    precondition_ok: bool | None


def ck_certificate(system: DelaySystem, config: FrequencyConfig | None = None,
                   check_precondition: bool = False) -> CkReport:
    """Sample ``||(G_p B)^+ G_p||`` at the zeros ``p`` of ``det Q``.

    ``G_p`` has orthonormal rows spanning the left kernel of ``Q(p)``.  The
    search covers ``Re p`` in the padded strip and ``0 <= Im p <= W``, with
    ``W = 2 pi K / step`` for commensurable delays and ``2 pi K / L_N``
    otherwise (``K = config.windows``).  Divergence is flagged when the
    supremum exceeds ``config.divergence_threshold`` or when the supremum
    over the later half of the windows is more than twice that over the
    earlier half.
    """
    config = config or FrequencyConfig()
    f = det_h_exppoly(system)
    strip = strip_bounds(system, f)
    pre = None
    if check_precondition:
        pre = exact_necessary_verdict(system, config=config).status is not Status.FAILS
    if strip.empty:
        return CkReport((), (), (), 0.0, False, (0.0, 0.0), pre)
    dc = commensurability(system)
    unit = float(dc.step) if dc.kind == "commensurable" else system.max_delay
    height = 2 * math.pi / unit
    K = config.windows
    pad = config.strip_pad
    zeros, dims, norms, win_sup = [], [], [], []
    for w in range(K):
        zs = exp_zeros(f, strip.beta1 - pad, strip.beta2 + pad, w * height, (w + 1) * height)
        sup_w = 0.0
        for p, _mult in zs:
            if any(abs(p - z) < 1e-8 * (1 + abs(p)) for z in zeros[-len(zs) - 4:]):
                continue  # zero on a shared window edge
            Q = q_hat_eval(system, p)
            U, s, _ = np.linalg.svd(Q)
            k = max(1, int(np.sum(s <= 1e-8 * max(1.0, s[0]))))
            G = U[:, -k:].conj().T
            Phi = np.linalg.pinv(G @ system.B) @ G
            nv = float(np.linalg.norm(Phi, 2))
            zeros.append(complex(p))
            dims.append(k)
            norms.append(nv)
            sup_w = max(sup_w, nv)
        win_sup.append(sup_w)
    sup = max(norms) if norms else 0.0
    half = K // 2
    growing = K > 1 and max(win_sup[half:]) > 2.0 * max(max(win_sup[:half]), 1e-300)
    divergent = sup > config.divergence_threshold or growing
    return CkReport(tuple(zeros), tuple(dims), tuple(norms), sup, bool(divergent),
                    (strip.beta1 - pad, strip.beta2 + pad, 0.0, K * height), pre)


def margin_heatmap(system: DelaySystem, sigma: np.ndarray, im_p: np.ndarray) -> np.ndarray:
    """Hautus margin on the grid ``sigma x im_p`` (rows follow ``sigma``)."""
    S, W = np.meshgrid(sigma, im_p, indexing="ij")
    return hautus_margin(system, S + 1j * W)
