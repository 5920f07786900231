"""Independent reference computations for the test-suite.

The root counter here never builds a Sturm sequence. It isolates the
critical points of p recursively, shrinks each critical interval until p
provably has no root inside it, and counts sign changes of p on the
monotone pieces that remain.
"""

from __future__ import annotations

from fractions import Fraction

import sympy as sp

Z = sp.Symbol("z")


def to_sympy(coeffs) -> sp.Poly:
    """Ascending rational coefficients -> sympy Poly over QQ."""
    return sp.Poly([sp.Rational(c.numerator, c.denominator) if isinstance(c, Fraction) else sp.Rational(c)
                    for c in reversed(list(coeffs))] or [0], Z, domain="QQ")


def _q(v) -> Fraction:
    v = sp.Rational(v)
    return Fraction(int(v.p), int(v.q))


def _ev(p: sp.Poly, x: Fraction) -> Fraction:
    return _q(p.eval(sp.Rational(x.numerator, x.denominator)))


def _sign(x) -> int:
    return (x > 0) - (x < 0)


def _cauchy(p: sp.Poly) -> Fraction:
    cs = [_q(c) for c in p.all_coeffs()]
    return 1 + max((abs(c / cs[0]) for c in cs[1:]), default=Fraction(0))


def _deriv_bound(p: sp.Poly, l: Fraction, r: Fraction) -> Fraction:
    """Upper bound for |p'| on [l, r]."""
    m = max(abs(l), abs(r), Fraction(1))
    d = p.diff(Z)
    return sum((abs(_q(c)) * m**k for k, c in enumerate(reversed(d.all_coeffs()))), Fraction(0))


def isolate(p: sp.Poly) -> list[tuple[Fraction, Fraction]]:
    """Closed intervals [l, r], each holding exactly one real root of the
    square-free p (l == r for an exact root), sorted and disjoint."""
    p = p.sqf_part()
    deg = p.degree()
    if deg <= 0:
        return []
    if deg == 1:
        a, b = (_q(c) for c in p.all_coeffs())
        x = -b / a
        return [(x, x)]
    B = _cauchy(p) + 1
    crit = isolate(p.diff(Z))
    q = p.diff(Z).sqf_part()
    safe = []
    for l, r in crit:
        while True:
            if l == r:
                if _ev(p, l) != 0:
                    safe.append((l, r))
                    break
                raise AssertionError("square-free p shares a root with p'")
            M = _deriv_bound(p, l, r)
            pl, pr = _ev(p, l), _ev(p, r)
            if min(abs(pl), abs(pr)) > M * (r - l):
                safe.append((l, r))
                break
            m = (l + r) / 2
            qm = _ev(q, m)
            if qm == 0:
                l = r = m
            elif _sign(qm) == _sign(_ev(q, l)) and _ev(q, l) != 0:
                l = m
            else:
                r = m
    B = max([B] + [abs(x) + 1 for lr in safe for x in lr])
    cuts = [-B] + [x for lr in safe for x in lr] + [B]
    out = []
    for u, v in zip(cuts[0::2], cuts[1::2]):
        pu, pv = _ev(p, u), _ev(p, v)
        if pu == 0:
            out.append((u, u))
        elif pv == 0:
            out.append((v, v))
        elif _sign(pu) != _sign(pv):
            out.append((u, v))
    return sorted(set(out))


def count_distinct_real_roots(coeffs, a=None, b=None) -> int:
    """Distinct real roots in the open interval (a, b); None is infinite."""
    p = to_sympy(coeffs)
    if p.is_zero:
        raise ValueError("zero polynomial")
    n = 0
    sq = p.sqf_part()
    on_end = [e for e in (a, b) if e is not None and _ev(sq, e) == 0]
    for l, r in isolate(p):
        if any(l <= e <= r for e in on_end):
            continue  # the root in [l, r] is the excluded endpoint itself
        while True:
            inside_a = a is None or l > a
            inside_b = b is None or r < b
            outside = (a is not None and r <= a) or (b is not None and l >= b)
            if outside:
                break
            if inside_a and inside_b:
                n += 1
                break
            if l == r:
                break  # exact root sitting on an endpoint
            m = (l + r) / 2
            pm = _ev(sq, m)
            if pm == 0:
                l = r = m
            elif _sign(pm) == _sign(_ev(sq, l)) and _ev(sq, l) != 0:
                l = m
            else:
                r = m
    return n


def sympy_count(coeffs, a=None, b=None) -> int:
    """sympy's own count, adjusted to an open interval."""
    p = to_sympy(coeffs).sqf_part()
    if p.degree() <= 0:
        return 0
    lo = -sp.oo if a is None else sp.Rational(a.numerator, a.denominator)
    hi = sp.oo if b is None else sp.Rational(b.numerator, b.denominator)
    n = p.count_roots(lo, hi)  # closed interval in sympy
    for end in (lo, hi):
        if end.is_finite and p.eval(end) == 0:
            n -= 1
    return n
