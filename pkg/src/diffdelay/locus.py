"""Algebraic loci for two rationally independent delays, one input.

Time is rescaled so that the delays are ``(L, 1)`` with ``0 < L < 1``
irrational.  Writing ``x = exp(-p L)`` and ``y = exp(-p)``, loss of rank of
``[H(p), B]`` is an algebraic condition on ``(x, y)``; whether a solution is
hit by some ``p`` is decided by :func:`myz_membership`.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from ._exact import frac_array
from .core import DelaySystem, commensurability
from .frequency import (FrequencyConfig, Mode, Status, Verdict, Witness, _point_witness,
                        _rank_witness, closure_margin, exp_zeros, hautus_margin, rank_AN_B)
from .xi_algebra import ExpPolynomial, group_exponential

K_SEARCH = 1_000_000


class LocusError(ValueError):
    """Input outside the scope of the locus analysis."""


def _scaled_L(system: DelaySystem) -> float:
    if system.N != 2:
        raise LocusError("locus analysis needs exactly two delays")
    if system.m != 1:
        raise LocusError("locus analysis needs a single input")
    dc = commensurability(system)
    if dc.kind == "commensurable":
        raise LocusError("delay ratio is rational; use the commensurable analysis")
    if dc.kind != "independent":
        raise LocusError(f"delays are not independent: {dc.note}")
    return system.delays[0] / system.delays[1]


# -- image of p -> (exp(-pL), exp(-p)) --------------------------------------------

@dataclass(frozen=True)
class MYZResult:
    """Membership of ``Z`` in ``M Y(C)`` and in its closure.

    ``a`` is ``M^{-1} Z`` when ``M`` is invertible, ``k`` the branch index
    realizing membership, ``residual`` the best branch residual found and
    ``suspect`` flags a near-coincidence the analytic test did not accept.
    """

    in_image: bool
    in_closure: bool
    singular: bool
    a: tuple | None = None
    k: int | None = None
    residual: float | None = None
    suspect: bool = False
    center: complex | None = None
    radius: float | None = None


def _branch_residuals(a1: complex, a2: complex, L: float, K: int = K_SEARCH):
    th2 = cmath.phase(a2)
    ks = np.arange(-K, K + 1)
    vals = a1 - abs(a2) ** L * np.exp(1j * L * (th2 + 2 * math.pi * ks))
    r = np.abs(vals) / (1 + abs(a1))
    i = int(np.argmin(r))
    return int(ks[i]), float(r[i])


def _point_membership(a1: complex, a2: complex, L: float, tol: float):
    """Is ``(a1, a2) = (exp(-pL), exp(-p))`` for some ``p``?  And in the closure?"""
    if abs(a2) == 0 or abs(a1) == 0:
        return False, False, None, None, False
    radius = abs(a2) ** L
    in_closure = bool(abs(abs(a1) - radius) <= tol * (1 + abs(a1)))
    real = abs(a1.imag) <= 1e-12 * abs(a1) and abs(a2.imag) <= 1e-12 * abs(a2)
    kbest, rbest = _branch_residuals(a1, a2, L)
    if real:
        # Only k = 0 with both entries positive can work when L is irrational.
        ok = a1.real > 0 and a2.real > 0 and abs(a1.real - a2.real ** L) <= tol * (1 + abs(a1))
        suspect = (not ok) and rbest < 1e-12
        return ok, in_closure, 0 if ok else None, rbest, suspect
    ok = in_closure and rbest <= tol
    return ok, in_closure, kbest if ok else None, rbest, False


def myz_membership(M, Z, L: float, tol: float = 1e-10) -> MYZResult:
    """Decide whether ``Z`` lies in ``M Y(C)``, ``Y(p) = (exp(-pL), exp(-p))``.

    For singular ``M`` image, closure and the affine notion all reduce to
    ``Z`` in the column space of ``M``.  For invertible ``M`` put
    ``(a1, a2) = M^{-1} Z``: ``Z`` is in the image iff
    ``a1 = |a2|^L exp(i L (arg a2 + 2 k pi))`` for an integer ``k``, and in
    the closure iff ``|a1| = |a2|^L``.
    """
    M = np.asarray(M, dtype=complex)
    Z = np.asarray(Z, dtype=complex).ravel()
    if not (0 < L < 1):
        raise LocusError("L must lie in (0, 1)")
    if np.allclose(Z, 0):
        raise LocusError("Z must be nonzero")
    s = np.linalg.svd(M, compute_uv=False)
    if s[-1] <= 1e-12 * max(1.0, s[0]):
        if s[0] <= 1e-14:
            inside = False
        else:
            r = np.linalg.lstsq(M, Z, rcond=None)[0]
            inside = bool(np.linalg.norm(M @ r - Z) <= 1e-9 * (1 + np.linalg.norm(Z)))
        return MYZResult(inside, inside, True)
    a = np.linalg.solve(M, Z)
    a1, a2 = complex(a[0]), complex(a[1])
    ok, clo, k, res, sus = _point_membership(a1, a2, L, tol)
    return MYZResult(ok, clo, False, (a1, a2), k, res, sus, a1, abs(a2) ** L)


# -- two-dimensional state ------------------------------------------------------

@dataclass(frozen=True)
class Locus2x2:
    """Classification for ``d = 2``.

    In case III, ``beta = det[B, A2 B] / det[B, A1 B]`` and
    ``alpha = det[B, (A2 - beta A1) B_perp]``; the circle has center ``beta``
    and radius ``|alpha|^(1 - L)``.
    """

    case: str
    L: float
    beta: float | None
    alpha: float | None
    theta: float | None
    center: float | None
    radius: float | None
    zero_in_S: bool | None
    zero_in_C: bool | None
    approx: Verdict
    exact_necessary: Verdict
    suspect: bool = False


def _exp_search_box(f: ExpPolynomial):
    """Real-part range holding all zeros of ``f``, and a height with several zeros."""
    es = np.array(f.exponents)
    cs = np.array([abs(complex(c)) for c in f.coeffs])

    def dominated(i, sig):
        others = np.delete(np.arange(len(es)), i)
        return np.sum(cs[others] * np.exp(-sig * (es[others] - es[i]))) < cs[i]

    lo, hi = -1.0, 1.0
    while not dominated(len(es) - 1, lo):
        lo *= 2
    while not dominated(0, hi):
        hi *= 2
    height = 8 * math.pi / (es[-1] - es[0])
    return lo, hi, height


def _scalar_zero_witness(system: DelaySystem, terms, scale: float, config: FrequencyConfig) -> Witness | None:
    f = group_exponential(terms, exact=False)
    if len(f.exponents) < 2:
        return None
    lo, hi, height = _exp_search_box(f)
    zs = exp_zeros(f, lo, hi, 0.0, height)
    if not zs:
        return None
    return _point_witness(system, complex(zs[0][0]) / scale, config)


def _closure_witness(system: DelaySystem, x0: complex, y0: complex) -> Witness:
    scale = system.delays[1]
    sigma = -math.log(abs(y0)) / scale
    phases = (cmath.phase(x0), cmath.phase(y0))
    g = float(closure_margin(system, sigma, np.array([phases]))[0])
    return Witness("closure", g, sigma=sigma, phases=phases)


def classify_2x2(system: DelaySystem, config: FrequencyConfig | None = None,
                 tol: float = 1e-10) -> Locus2x2:
    """Case analysis for ``N = d = 2``, ``m = 1`` with independent delays."""
    config = config or FrequencyConfig()
    if system.d != 2:
        raise LocusError("classify_2x2 needs d = 2")
    L = _scaled_L(system)
    scale = system.delays[1]
    A1, A2 = system.A
    b = system.B[:, 0]
    nb = np.linalg.norm(b)
    mode = Mode.TWO_DELAY

    def fails(w, reason):
        v = Verdict(Status.FAILS, mode, w, reason=reason)
        return v

    rk = rank_AN_B(system, tol=config.rank_tol)
    if not rk.full:
        v = fails(_rank_witness(system), "Ran A2 is contained in Ran B")
        return Locus2x2("I", L, None, None, None, None, None, None, None, v, v)
    det = lambda u, w: u[0] * w[1] - u[1] * w[0]
    c1 = det(b, A1 @ b)
    c2 = det(b, A2 @ b)
    eps = tol * (1 + np.linalg.norm(A1) + np.linalg.norm(A2)) * max(nb, 1) ** 2
    ctrl1, ctrl2 = abs(c1) > eps, abs(c2) > eps
    if not ctrl1 and not ctrl2:
        g = np.array([-b[1], b[0]])
        a1 = g @ A1 @ g / (g @ g)
        a2 = g @ A2 @ g / (g @ g)
        terms = [(0.0, 1.0), (L, -a1), (1.0, -a2)]
        w = _scalar_zero_witness(system, terms, scale, config)
        v = fails(w, "both pairs uncontrollable; an uncontrolled scalar mode has zeros")
        return Locus2x2("I", L, None, None, None, None, None, None, None, v, v)
    if ctrl1 != ctrl2:
        hv = Verdict(Status.HOLDS, mode, reason="exactly one pair controllable and Ran A2 not in Ran B")
        return Locus2x2("II", L, None, None, None, None, None, False, False, hv, hv)
    beta = c2 / c1
    bperp = np.array([-b[1], b[0]]) / nb ** 2
    alpha = det(b, (A2 - beta * A1) @ bperp)
    if abs(alpha) <= tol * (1 + abs(beta)):
        alpha = 0.0
    theta = 0.0 if alpha >= 0 else math.pi
    radius = abs(alpha) ** (1 - L) if alpha != 0 else 0.0
    if alpha == 0:
        in_S, in_C, suspect = False, abs(beta) <= tol, False
    else:
        in_S = alpha > 0 and abs(beta + alpha ** (1 - L)) <= tol * (1 + abs(beta))
        in_C = abs(abs(beta) - radius) <= tol * (1 + abs(beta))
        ks = np.arange(-K_SEARCH, K_SEARCH + 1)
        vals = np.abs(beta + radius * np.exp(1j * (theta + 2 * math.pi * ks) * (1 - L)))
        kb = int(ks[int(np.argmin(vals))])
        rb = float(vals.min())
        suspect = (not in_S and rb < 1e-12) or (in_S and kb != 0 and rb < vals[K_SEARCH])
    if suspect:
        iv = Verdict(Status.INCONCLUSIVE, mode, reason="branch search found a near-solution the analytic test rejects")
        return Locus2x2("III", L, beta, alpha, theta, beta, radius, in_S, in_C, iv, iv, True)
    if in_S:
        w = _point_witness(system, complex(math.log(alpha)) / scale, config)
        av = fails(w, "0 lies in the dense locus S")
    else:
        av = Verdict(Status.HOLDS, mode, reason="0 is not in the dense locus S")
    if in_S:
        ev = av
    elif in_C:
        # closure point: y = 1/alpha, x = -beta/alpha
        ev = fails(_closure_witness(system, complex(-beta / alpha), complex(1 / alpha)), "0 lies on the circle C")
    else:
        ev = Verdict(Status.HOLDS, mode, reason="0 is not on the circle C")
    return Locus2x2("III", L, beta, alpha, theta, beta, radius, in_S, in_C, av, ev)


# -- three-dimensional state -----------------------------------------------------

X, Y = sp.symbols("x y")


def _sym(mat) -> sp.Matrix:
    fr = frac_array(mat)
    return sp.Matrix(fr.shape[0], fr.shape[1], lambda i, j: sp.Rational(fr[i, j].numerator, fr[i, j].denominator))


def _strip_monomial(g: sp.Poly) -> sp.Poly:
    if g.is_zero:
        return g
    mons = g.monoms()
    a = min(m[0] for m in mons)
    b = min(m[1] for m in mons)
    return sp.Poly(sp.expand(g.as_expr() / (X ** a * Y ** b)), X, Y)


@dataclass(frozen=True)
class ZeroSet:
    """Common zeros of polynomials in ``(x, y)``.

    ``curve`` is a non-monomial common factor (or None); ``points`` the
    isolated common zeros of the cofactors.
    """

    curve: sp.Poly | None
    points: tuple
    close_roots: bool = False


def algebraic_zero_set(polys, root_sep: float = 1e-8) -> ZeroSet:
    """Common zeros of polynomials in ``x, y`` with rational coefficients."""
    P = [sp.Poly(p, X, Y) for p in polys]
    P = [p for p in P if not p.is_zero]
    if not P:
        raise LocusError("all polynomials vanish identically")
    g = P[0]
    for p in P[1:]:
        g = sp.gcd(g, p)
    curve = None
    if g.total_degree() > 0:
        core = _strip_monomial(g)
        if core.total_degree() > 0 and len(core.terms()) >= 2:
            curve = core
        P = [sp.Poly(sp.quo(p, g), X, Y) for p in P]
    if any(p.total_degree() == 0 and not p.is_zero for p in P):
        return ZeroSet(curve, ())
    G = sp.groebner([p.as_expr() for p in P], X, Y, order="lex")
    if list(G.exprs) == [1]:
        return ZeroSet(curve, ())
    if not G.is_zero_dimensional:
        raise LocusError("positive-dimensional zero set after removing the common factor")
    uni = [sp.Poly(e, Y) for e in G.exprs if X not in e.free_symbols]
    py = uni[0]
    py = sp.Poly(sp.sqf_part(py.as_expr()), Y)
    yroots = [complex(r) for r in py.nroots(n=30, maxsteps=200)]
    points = []
    Pnum = [sp.lambdify((X, Y), p.as_expr(), "numpy") for p in P]
    scale = [float(sum(abs(c) for c in p.coeffs())) for p in P]
    for y0 in yroots:
        cands = []
        for e in G.exprs:
            if X not in e.free_symbols:
                continue
            px = sp.Poly(sp.N(e.subs(Y, sp.Float(y0.real, 30) + sp.I * sp.Float(y0.imag, 30)), 30), X)
            if px.degree() > 0:
                cands.append(px)
        if not cands:
            raise LocusError("could not recover x from the triangular basis")
        cands.sort(key=lambda p: p.degree())
        coeffs = [complex(c) for c in cands[0].all_coeffs()]
        for x0 in np.roots(coeffs):
            x0 = complex(x0)
            res = max(abs(complex(f(x0, y0))) / (s * (1 + abs(x0) + abs(y0)) ** 2) for f, s in zip(Pnum, scale))
            if res <= 1e-7:
                points.append((x0, y0))
    uniq = []
    for pt in points:
        if all(abs(pt[0] - q[0]) + abs(pt[1] - q[1]) > 1e-10 for q in uniq):
            uniq.append(pt)
    close = any(abs(p[0] - q[0]) + abs(p[1] - q[1]) < root_sep
                for i, p in enumerate(uniq) for q in uniq[i + 1:])
    uniq.sort(key=lambda t: (round(t[1].real, 9), round(t[1].imag, 9), round(t[0].real, 9), round(t[0].imag, 9)))
    return ZeroSet(curve, tuple(uniq), close)


@dataclass(frozen=True)
class LocusPoint:
    """One isolated algebraic solution ``(x, y)`` with its membership data.

    The circle has center ``x`` and radius ``|y|^L``.
    """

    x: complex
    y: complex
    in_image: bool
    in_closure: bool
    k: int | None
    residual: float | None
    suspect: bool


@dataclass(frozen=True)
class Locus3x3:
    case: str
    L: float
    r0: int
    points: tuple
    curve: str | None
    conics: tuple | None
    approx: Verdict
    exact_necessary: Verdict
    notes: tuple = ()


def _case3_conics(system: DelaySystem):
    """Conics in the basis ``(A1 B, A2 B, B)``.

    Returns ``(f1, f2, Q1, Q2)`` with ``f1 = y + v^T Q1 v`` and
    ``-f2 = x + v^T Q2 v`` where ``v = (x, y)``.
    """
    A1, A2 = (_sym(a) for a in system.A)
    Bs = _sym(system.B)
    T = sp.Matrix.hstack(A1 * Bs, A2 * Bs, Bs)
    Ti = T.inv()
    A1p, A2p = Ti * A1 * T, Ti * A2 * T
    Ht = sp.eye(2) - X * A1p[:2, :2] - Y * A2p[:2, :2]
    v3 = sp.Matrix([X, Y])
    f1 = sp.expand(sp.Matrix.hstack(Ht[:, 0], v3).det())
    f2 = sp.expand(sp.Matrix.hstack(Ht[:, 1], v3).det())

    def qform(expr):
        p = sp.Poly(expr, X, Y)
        a = p.coeff_monomial(X ** 2)
        b = p.coeff_monomial(X * Y)
        c = p.coeff_monomial(Y ** 2)
        return ((float(a), float(b) / 2), (float(b) / 2, float(c)))

    return f1, f2, qform(f1 - Y), qform(-f2 - X)


def classify_3x3(system: DelaySystem, config: FrequencyConfig | None = None,
                 tol: float = 1e-10) -> Locus3x3:
    """Case analysis for ``N = 2``, ``d = 3``, ``m = 1`` with independent delays.

    The rank of ``[H(p), B]`` drops iff the ``2 x 3`` matrix ``G H(p)`` (rows
    of ``G`` spanning the left kernel of ``B``) has rank below two, i.e. iff
    ``(x, y)`` is a common zero of its ``2 x 2`` minors.  A non-monomial
    common factor yields true zeros; isolated common zeros are tested one by
    one for membership in the image of ``p -> (exp(-pL), exp(-p))``.
    """
    config = config or FrequencyConfig()
    if system.d != 3:
        raise LocusError("classify_3x3 needs d = 3")
    L = _scaled_L(system)
    scale = system.delays[1]
    mode = Mode.TWO_DELAY
    A1, A2 = system.A
    B = system.B
    r0 = int(np.linalg.matrix_rank(np.hstack([B, A1 @ B, A2 @ B]), tol=1e-9 * (1 + np.abs(np.hstack([B, A1 @ B, A2 @ B])).max())))
    rk = rank_AN_B(system, tol=config.rank_tol)
    if not rk.full:
        v = Verdict(Status.FAILS, mode, _rank_witness(system), reason=f"rank [A2, B] = {rk.rank} < 3")
        return Locus3x3("I", L, r0, (), None, None, v, v)
    case = "I" if r0 == 1 else ("II" if r0 == 2 else "III")
    conics = None
    if case == "III":
        f1, f2, Q1, Q2 = _case3_conics(system)
        polys = [f1, f2]
        conics = (Q1, Q2)
    else:
        Bs = _sym(B)
        null = Bs.T.nullspace()
        G = sp.Matrix.hstack(*null).T
        Kxy = G - X * G * _sym(A1) - Y * G * _sym(A2)
        polys = [sp.expand(Kxy[:, [i, j]].det()) for i, j in ((0, 1), (0, 2), (1, 2))]
    zs = algebraic_zero_set(polys)
    notes = []
    if zs.close_roots:
        notes.append("isolated solutions closer than 1e-8; multiplicity may be misjudged")
    pts = []
    for x0, y0 in zs.points:
        if abs(x0) < 1e-12 or abs(y0) < 1e-12:
            continue
        ok, clo, k, res, sus = _point_membership(x0, y0, L, tol)
        pts.append(LocusPoint(x0, y0, ok, clo, k, res, sus))
    curve_txt = str(zs.curve.as_expr()) if zs.curve is not None else None
    if any(p.suspect for p in pts) or zs.close_roots:
        iv = Verdict(Status.INCONCLUSIVE, mode, reason="; ".join(notes) or "suspect branch coincidence")
        return Locus3x3(case, L, r0, tuple(pts), curve_txt, conics, iv, iv, tuple(notes))
    if zs.curve is not None:
        terms = [(m[0] * L + m[1], float(c)) for m, c in zip(zs.curve.monoms(), zs.curve.coeffs())]
        w = _scalar_zero_witness(system, terms, scale, config)
        v = Verdict(Status.FAILS, mode, w, reason=f"common factor {curve_txt} has zeros on the exponential curve")
        return Locus3x3(case, L, r0, tuple(pts), curve_txt, conics, v, v, tuple(notes))
    hit = [p for p in pts if p.in_image]
    if hit:
        p0 = hit[0]
        ps = -cmath.log(p0.y) - 2j * math.pi * p0.k
        w = _point_witness(system, ps / scale, config)
        v = Verdict(Status.FAILS, mode, w, reason="an isolated solution lies on the exponential curve")
        return Locus3x3(case, L, r0, tuple(pts), curve_txt, conics, v, v, tuple(notes))
    av = Verdict(Status.HOLDS, mode, reason="no solution lies on the exponential curve")
    near = [p for p in pts if p.in_closure]
    if near:
        ev = Verdict(Status.FAILS, mode, _closure_witness(system, near[0].x, near[0].y),
                     reason="an isolated solution lies on its circle")
    else:
        ev = Verdict(Status.HOLDS, mode, reason="no solution lies on its circle")
    return Locus3x3(case, L, r0, tuple(pts), curve_txt, conics, av, ev, tuple(notes))


def loci_rows(result) -> list:
    """Rows ``(center_re, center_im, radius, tag)`` for CSV export."""
    rows = []
    if isinstance(result, Locus2x2):
        if result.center is not None:
            rows.append((float(result.center), 0.0, float(result.radius), f"case{result.case}"))
        return rows
    for i, p in enumerate(result.points):
        tag = "image" if p.in_image else ("closure" if p.in_closure else "clear")
        rows.append((p.x.real, p.x.imag, abs(p.y) ** result.L, f"point{i}:{tag}"))
    return rows
