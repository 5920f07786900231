"""Acceptance criteria, one test per criterion (criterion 7 has two parts).

Each test records a one-line verdict that conftest prints in the terminal
summary, then asserts it.
"""

import math
import random
from fractions import Fraction

import numpy as np

from conftest import ACCEPTANCE
from oracles import count_distinct_real_roots
from fiberscope.fiber_atlas import collision_search, component_count_check, jelonek_probe, level_census
from fiberscope.field_builder import JacobianExpr, delta_field, sample_box, verify_identities
from fiberscope.orbit_flow import (
    TraceOptions,
    conservation_check,
    escape_return_probe,
    halton_seeds,
    monotonicity_check,
    trace_many,
)
from fiberscope.poly_real import Sign, UniPoly, certify_sign, count_roots, preimage_interval_check
from fiberscope.presets import PRESET_NAMES, circle_map, example_family, get_preset, k_alpha_poly, m_poly
from fiberscope.scalar_expr import compile_exprs, evaluate_exact


def record(key: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[key] = (bool(ok), detail)
    assert ok, detail


def test_c01_sturm_certificate_for_m():
    m = m_poly()
    n = count_roots(m, None)
    s = certify_sign(m)
    record("1", n == 0 and s is Sign.POSITIVE, f"roots of m on R = {n}, sign = {s.value}")


def test_c02_jacobian_closed_form():
    fam = example_family()
    jac = JacobianExpr(fam.map)
    P = sample_box(np.random.default_rng(0), (-3, 3), 500, 3)
    J = jac.det_at(P)
    closed = compile_exprs([fam.jacobian_closed_form()], 3).at_points(P)[:, 0]
    rel = float(np.max(np.abs(J - closed) / np.abs(closed)))
    at0 = evaluate_exact(jac.determinant, [0, 0, 0])
    record("2", rel <= 1e-8 and at0 == Fraction(-63, 50),
           f"max rel error {rel:.2e} over 500 points, J(0) = {at0}")


def test_c03_operator_identities():
    worst_ann, worst_det, failures = 0.0, 0.0, []
    maps = [("example", example_family().map)] + [(name, get_preset(name)) for name in PRESET_NAMES]
    for name, fmap in maps:
        for i in range(1, fmap.n + 1):
            rep = verify_identities(fmap, i, 1000, rng=np.random.default_rng(i), abs_tol=1e-9, rel_tol=1e-9)
            worst_ann = max(worst_ann, rep.max_annihilation_error)
            worst_det = max(worst_det, rep.max_determinant_rel_error)
            if not rep.passed:
                failures.append(f"{name}:{i}")
    record("3", not failures,
           f"{len(maps)} maps, annihilation {worst_ann:.1e}, determinant rel {worst_det:.1e}, failures {failures}")


def _random_alpha_h(rnd: random.Random):
    alpha = Fraction(rnd.randint(-60, 60), rnd.randint(1, 12))
    h = 1 + Fraction(rnd.randint(1, 80), rnd.randint(1, 12))
    return alpha, h


def test_c04_k_alpha_structure():
    rnd = random.Random(4)
    bad = []
    for _ in range(50):
        alpha, h = _random_alpha_h(rnd)
        k = k_alpha_poly(alpha, h)
        d1, d2, d3 = k.derivative(), k.derivative(2), k.derivative(3)
        ok = (
            certify_sign(d3) is Sign.POSITIVE
            and count_roots(d2) == 1
            and count_roots(d1) == 2
            and count_roots(d1, (None, 0)) == 1
            and count_roots(d1, (0, None)) == 1
            and k(1) == -h
            and k(-1) == h
            and all(preimage_interval_check(k, 1, name).connected for name in ("I1", "I2", "I3"))
        )
        if not ok:
            bad.append((str(alpha), str(h)))
    record("4", not bad, f"50 random (alpha, h), failures {bad}")


def test_c05_census_two_resolutions():
    expected = {"f_h": {"c<0": 2, "c=0": 3, "c>0": 2}, "f3": {"c<0": 2, "c=0": 2, "c>0": 1}}
    coarse = level_census(1, 2, box=(-6, 6), pitch=0.1)
    fine = level_census(1, 2, box=(-6, 6), pitch=0.05)
    ok = coarse.counts == expected and fine.counts == expected and coarse.all_agree and fine.all_agree
    record("5", ok, f"pitch 0.1 {coarse.counts}; pitch 0.05 {fine.counts}")


def test_c06_collisions():
    fmap = example_family().map
    pairs = collision_search(fmap, (-3, 3), 0.1)
    mirrored = [
        c for c in pairs
        if abs(abs(c.p[2]) - 1.5) < 1e-9 and abs(c.p[2] + c.q[2]) < 1e-9
        and abs(c.p[0] - c.q[0]) < 1e-9 and abs(c.p[1] - c.q[1]) < 1e-9 and c.residual <= 1e-9
    ]
    origin = [
        c for c in mirrored
        if c.exact and max(abs(c.p[0]), abs(c.p[1])) < 1e-12
        and np.allclose(c.image, [0, 0, -1.25], atol=1e-12)
    ]
    none_cubic = collision_search(get_preset("cubic2d"), (-3, 3), 0.1)
    ok = len(mirrored) >= 10 and bool(origin) and not none_cubic
    record("6", ok, f"{len(mirrored)} verified mirrored pairs, exact origin pair {bool(origin)}, "
                    f"cubic2d pairs {len(none_cubic)}")


def _delta1_orbits(rtol, atol):
    fam = example_family()
    X = delta_field(fam.map, 1)
    seeds = halton_seeds((-2, 2), 100, 3)
    return fam.map, X, trace_many(X, seeds, 100.0, TraceOptions(rtol=rtol, atol=atol))


def _max_drift(fmap, traces):
    return max(conservation_check(tr, fmap, 1)["max_drift"] for tr in traces)


def test_c07a_conservation_and_monotonicity():
    fmap, X, traces = _delta1_orbits(1e-9, 1e-12)
    drift = _max_drift(fmap, traces)
    mono = [monotonicity_check(tr, fmap, 1, rel_tol=1e-6, X=X) for tr in traces]
    complete = all(set(tr.termination.values()) == {"horizon"} for tr in traces)
    ok = drift <= 1e-6 and all(v.ok for v in mono) and complete
    record("7.a", ok, f"100 orbits, drift {drift:.2e}, d/dt f1 vs J rel {max(v.max_rel_error for v in mono):.1e}, "
                      f"signs {sorted({v.sign for v in mono})}")


def test_c07b_drift_shrinks_when_tolerance_halved():
    fmap, _, base = _delta1_orbits(1e-9, 1e-12)
    _, _, halved = _delta1_orbits(5e-10, 5e-13)
    d0, d1 = _max_drift(fmap, base), _max_drift(fmap, halved)
    ratio = d0 / d1
    record("7.b", ratio >= 4.0, f"drift {d0:.2e} -> {d1:.2e} when halving tolerances, ratio {ratio:.2f} (need >= 4)")


def test_c08_surjectivity_probe():
    fam = example_family()
    found = {}
    for i in (1, 2):
        w = escape_return_probe(delta_field(fam.map, i), (-2, 2), (5, 10, 20), 32, 1e3)
        found[f"Delta{i}"] = w.found
    circ = escape_return_probe(delta_field(circle_map(), 2), (-2, 2), (5, 10, 20), 16, 1e3)
    ok = not any(found.values()) and circ.found and bool(circ.trapped)
    record("8", ok, f"example witnesses {found}, circular field trapped orbits {len(circ.trapped)}")


def spiral_translates(lo: float, hi: float) -> int:
    """Number of integers k with lo <= 2 pi k <= hi."""
    return math.floor(hi / (2 * math.pi)) - math.ceil(lo / (2 * math.pi)) + 1


def test_c09_component_counts():
    cubic = get_preset("cubic2d")
    pts = sample_box(np.random.default_rng(9), (-2, 2), 25, 2)
    levels = compile_exprs(cubic.components, 2).at_points(pts)
    rc = component_count_check(cubic, levels, (-3, 3), 0.1)
    cubic_ok = all(r["d"] == 1 for r in rc.per_level)

    ybox = (-10.0, 10.0)
    rs = component_count_check(get_preset("expspiral"), [(1.0, 0.0)], [(-2, 2), ybox, (-2, 2)], 0.1, drop_index=3)
    d_spiral, want = rs.per_level[0]["d"], spiral_translates(*ybox)

    re_ = component_count_check(example_family().map, [(0.0, 0.0, -1.25)], (-3, 3), 0.1)
    d_ex = re_.per_level[0]["d"]
    ok = cubic_ok and d_spiral == want and d_ex >= 2
    record("9", ok, f"cubic2d d=1 at 25 levels {cubic_ok}; expspiral d={d_spiral} (formula {want}); "
                    f"example d={d_ex} at (0,0,-5/4)")


def test_c10_jelonek_probe():
    comp = jelonek_probe(get_preset("compress2d"), 256, 1e3)
    dev = max(abs(abs(c["limit"][1]) - 1) for c in comp.candidates) if comp.candidates else math.inf
    cubic = jelonek_probe(get_preset("cubic2d"), 256, 1e3)
    ok = bool(comp.candidates) and dev <= 1e-3 and cubic.empty
    record("10", ok, f"compress2d {len(comp.candidates)} candidates, max ||y2|-1| {dev:.1e}; "
                     f"cubic2d candidates {len(cubic.candidates)}")


def test_c11_sturm_matches_bisection_oracle():
    rnd = random.Random(11)
    mismatches = 0
    for _ in range(200):
        square = rnd.random() < 0.3  # force a repeated rational root
        deg = rnd.randint(1, 6 if square else 8)
        coeffs = [Fraction(rnd.randint(-9, 9), rnd.randint(1, 5)) for _ in range(deg + 1)]
        if coeffs[-1] == 0:
            coeffs[-1] = Fraction(1)
        if square:
            r = Fraction(rnd.randint(-4, 4), rnd.randint(1, 2))
            coeffs = list((UniPoly(coeffs) * UniPoly((-r, 1)) ** 2).coeffs)
        a = Fraction(rnd.randint(-3, 0), rnd.randint(1, 2))
        b = a + Fraction(rnd.randint(1, 6), rnd.randint(1, 2))
        p = UniPoly(coeffs)
        for interval in (None, (a, b)):
            lo, hi = (None, None) if interval is None else interval
            if count_roots(p, interval) != count_distinct_real_roots(coeffs, lo, hi):
                mismatches += 1
    record("11", mismatches == 0, f"400 counts on 200 random polynomials of degree <= 8, mismatches {mismatches}")
