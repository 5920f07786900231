from fractions import Fraction

import pytest
import sympy as sp
from hypothesis import given, strategies as st

from oracles import count_distinct_real_roots, sympy_count, to_sympy
from fiberscope.poly_real import (
    NAMED_INTERVALS,
    RootInterval,
    Sign,
    UniPoly,
    certify_sign,
    count_roots,
    isolate_roots,
    monotonicity_profile,
    poly_gcd,
    preimage_interval_check,
    roots_in_open_interval,
    separate,
    sqf_list,
    sqf_part,
    sturm_chain,
)

fracs = st.fractions(min_value=-20, max_value=20, max_denominator=12)
small = st.fractions(min_value=-4, max_value=4, max_denominator=4)


@st.composite
def polys(draw, max_deg=8):
    cs = draw(st.lists(fracs, min_size=2, max_size=max_deg + 1))
    if cs[-1] == 0:
        cs[-1] = Fraction(1)
    return UniPoly(cs)


@st.composite
def rooted(draw):
    """Product of rational linear factors (some repeated) times a positive quadratic."""
    roots = draw(st.lists(small, min_size=1, max_size=4))
    mults = draw(st.lists(st.integers(1, 3), min_size=len(roots), max_size=len(roots)))
    p = UniPoly((1, 0, 1))
    for r, k in zip(roots, mults):
        p = p * UniPoly((-r, 1)) ** k
    return p, sorted(set(roots))


def test_arithmetic_and_division():
    a = UniPoly.parse("z^3 - 2*z + 1")
    b = UniPoly.parse("z - 1")
    q, r = divmod(a, b)
    assert r.is_zero and q * b == a
    assert a(Fraction(1, 2)) == Fraction(1, 8)
    assert (a - a).is_zero and a.degree == 3 and UniPoly(()).degree < 0


def test_str_parses_back():
    p = UniPoly((Fraction(-3, 2), 0, 5, Fraction(1, 7)))
    assert UniPoly.parse(str(p)) == p


def test_gcd_and_square_free():
    p = UniPoly.parse("(z - 1)^3*(z + 2)^2*(z^2 + 1)")
    assert sqf_part(p) == UniPoly.parse("(z - 1)*(z + 2)*(z^2 + 1)").monic()
    assert sorted(k for _, k in sqf_list(p)) == [1, 2, 3]
    assert poly_gcd(p, p.derivative()).degree == 3


def test_sturm_chain_ends_in_constant():
    chain = sturm_chain(UniPoly.parse("z^5 - 3*z + 1"))
    assert chain[-1].degree == 0


@given(polys())
def test_count_matches_sympy(p):
    assert count_roots(p) == to_sympy(p.coeffs).sqf_part().count_roots()


@given(polys(), small, st.fractions(min_value=Fraction(1, 4), max_value=6, max_denominator=4))
def test_count_in_interval_matches_oracle(p, a, w):
    b = a + w
    got = count_roots(p, (a, b))
    assert got == count_distinct_real_roots(p.coeffs, a, b) == sympy_count(p.coeffs, a, b)


@given(rooted())
def test_roots_on_endpoints_are_excluded(pr):
    p, roots = pr
    for r in roots:
        assert count_roots(p, (r, None)) == sum(s > r for s in roots)
        assert count_roots(p, (None, r)) == sum(s < r for s in roots)


@given(rooted())
def test_isolation_brackets_each_root_once(pr):
    p, roots = pr
    iso = isolate_roots(p)
    assert len(iso) == len(roots)
    for r, iv in zip(roots, iso):
        assert iv.lo <= r <= iv.hi
    for a, b in zip(iso, list(iso)[1:]):
        assert a.hi < b.lo


def test_isolation_multiplicities():
    iso = isolate_roots(UniPoly.parse("(z - 1/3)^2*(z + 5)^3*z"))
    assert iso.multiplicities == [3, 1, 2]


def test_refine_shrinks_and_keeps_root():
    iso = isolate_roots(UniPoly.parse("z^2 - 2")).refine(Fraction(1, 2**30))
    for iv, s in zip(iso, (-1, 1)):
        assert iv.width <= Fraction(1, 2**30)
        assert iv.lo ** 2 <= 2 <= iv.hi ** 2 or iv.hi ** 2 <= 2 <= iv.lo ** 2
        assert abs(iv.approx - s * 2**0.5) < 1e-9


def test_bisect_with_neighbouring_exact_root_on_endpoint():
    # root 0 of the factor sits on the left end of the bracket around 1/2
    f = UniPoly.parse("z*(2*z - 1)*(z - 1)")
    iv = RootInterval(Fraction(0), Fraction(1, 2) + Fraction(1, 8), f, 1)
    for _ in range(5):
        iv = iv.bisect()
    assert iv.contains(Fraction(1, 2))


def test_separate_makes_brackets_disjoint():
    f = UniPoly.parse("(z - 1/1000)*(z + 1/1000)")
    g = UniPoly.parse("z - 1/999")
    rs = separate([RootInterval(Fraction(-1), Fraction(1), f, 1), RootInterval(Fraction(-1), Fraction(1), g, 1)])
    assert all(a.hi < b.lo for a, b in zip(rs, rs[1:]))


def test_certify_sign():
    assert certify_sign(UniPoly.parse("z^2 + 1")) is Sign.POSITIVE
    assert certify_sign(UniPoly.parse("-(z^4 + 1/10)")) is Sign.NEGATIVE
    assert certify_sign(UniPoly.parse("z^2")) is Sign.MIXED
    assert certify_sign(UniPoly.parse("z - 1"), (1, 2)) is Sign.MIXED  # touches the closed end
    assert certify_sign(UniPoly.parse("z - 1"), (Fraction(3, 2), 2)) is Sign.POSITIVE
    assert certify_sign(UniPoly.parse("z - 1"), "I1") is Sign.NEGATIVE


def test_monotonicity_profile_of_cubic():
    prof = monotonicity_profile(UniPoly.parse("z^3 - 3*z"))
    assert prof.pattern == ("rise", "fall", "rise")
    assert prof.extrema == ["max", "min"]


def test_named_intervals():
    assert NAMED_INTERVALS["I2"] == (Fraction(-1), Fraction(1))
    assert count_roots(UniPoly.parse("z^2 - 4"), "I3") == 1


def test_roots_in_open_interval_skips_endpoint_roots():
    rs = roots_in_open_interval(UniPoly.parse("(z - 1)*(z + 1)*z"), "I2")
    assert len(rs) == 1 and rs[0].contains(0)


def test_preimage_check_two_pieces():
    # z^2 - 2 has |.| < 1 on two intervals around +-sqrt(2)
    chk = preimage_interval_check(UniPoly.parse("z^2 - 2"), 1, "R")
    assert chk.verdict == "Disconnected" and len(chk.pieces) == 2
    chk = preimage_interval_check(UniPoly.parse("z^2 - 2"), 1, "I3")
    assert chk.connected and len(chk.pieces) == 1


def test_preimage_check_empty_is_connected():
    chk = preimage_interval_check(UniPoly.parse("z^2 + 5"), 1, "R")
    assert chk.connected and chk.pieces == ()


def test_errors():
    with pytest.raises(ValueError):
        count_roots(UniPoly(()))
    with pytest.raises(ValueError):
        count_roots(UniPoly.parse("z"), (1, 0))
    with pytest.raises(ValueError):
        preimage_interval_check(UniPoly.parse("z"), 0, "R")
