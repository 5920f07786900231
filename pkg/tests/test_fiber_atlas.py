import math
from fractions import Fraction

import numpy as np
import pytest

from fiberscope.fiber_atlas import (
    Ainv,
    Einv,
    chart_points,
    collision_search,
    component_count_check,
    corollary_check,
    enumerate_components,
    exact_corollary_route,
    jelonek_probe,
    ray_directions,
    level_census,
)
from fiberscope.presets import ExampleFamilyParams, example_family, get_preset
from fiberscope.scalar_expr import compile_exprs, evaluate, parse_map


def test_inverse_helpers():
    y = np.linspace(-5, 5, 11)
    assert np.allclose(Einv(y + np.sqrt(1 + y**2)), y)
    x = np.linspace(-4, 4, 9)
    assert np.allclose(Ainv(2 * x / np.sqrt(1 + x**2), 2.0), x)


def test_circle_level_is_one_component():
    fmap = parse_map("#semialgebraic\nf1 = x1^2 + x2^2\nf2 = x2\n")
    cs = enumerate_components(fmap, [1.0], (-2, 2), 0.05, keep=[1])
    assert cs.d == 1 and not cs.ambiguous and not cs.components[0]["exits_box"]


def test_hyperbola_level_has_two_branches():
    fmap = parse_map("#semialgebraic\nf1 = x1*x2\nf2 = x2\n")
    cs = enumerate_components(fmap, [1.0], (-3, 3), 0.05, keep=[1])
    assert cs.d == 2 and all(c["exits_box"] for c in cs.components)


def test_point_fibers_of_a_two_to_one_map():
    fmap = parse_map("#semialgebraic\nf1 = x1^2\nf2 = x2\n")
    cs = enumerate_components(fmap, [1.0, 0.5], (-2, 2), 0.1)
    assert cs.d == 2
    assert np.allclose(sorted(abs(p[0]) for p in (c["representative"] for c in cs.components)), [1, 1], atol=1e-9)


def test_close_clusters_are_flagged():
    # roots x1 = +-0.2 are closer than twice the linking radius at pitch 0.1
    fmap = parse_map("#semialgebraic\nf1 = x1^2\nf2 = x2\n")
    cs = enumerate_components(fmap, [0.04, 0.0], (-1, 1), 0.1)
    assert cs.ambiguous


def test_curve_fibers_joined_by_orbits():
    # the exp-spiral F_3 fiber over (1, 0) is the family of lines x = 0, y = 2 pi k
    fmap = get_preset("expspiral")
    cs = enumerate_components(fmap, [1.0, 0.0], [(-1, 1), (-4, 4), (-1, 1)], 0.1, drop_index=3,
                              cross_validate=True)
    assert cs.d == 1 and cs.d_connected == 1 and cs.cross_validation["agree"]


def test_census_charts_lie_on_their_levels():
    L, h = 1, 2
    census = level_census(L, h, numeric=False)
    fam_h = (example_family(ExampleFamilyParams(1, 2, 3)).f_h(h))
    f3 = example_family().map[3]
    for row in census.rows:
        pts = chart_points(row, L, h, samples=50)
        f = fam_h if row.function == "f_h" else f3
        vals = compile_exprs([f], 3).at_points(pts)[:, 0]
        assert np.allclose(vals, float(row.c), atol=1e-9), row.charts


def test_census_expected_counts_for_other_parameters():
    census = level_census(Fraction(1, 2), Fraction(7, 3), numeric=False)
    fh = {r.sign_class: r.expected for r in census.rows if r.function == "f_h"}
    assert fh == {"c<0": 2, "c=0": 3, "c>0": 2}


def test_exact_corollary_route_connected():
    p = ExampleFamilyParams()
    for c_h in range(-2, 3):
        for c3 in range(-2, 3):
            assert exact_corollary_route(p, 1, c_h, c3)["connected"]
    assert not exact_corollary_route(p, 3, 1, 1)["applicable"]


@pytest.mark.slow
def test_corollary_numeric_and_exact_agree_for_slot_one():
    res = corollary_check(example_family().map, 1, levels_j=(-1, 1), levels_k=(-1, 1),
                          family=ExampleFamilyParams())
    assert res.verdict == "connected"
    assert all(lv.numeric in ("connected", "empty") and lv.exact == "connected" for lv in res.levels)


def test_corollary_rejects_wrong_dimension():
    with pytest.raises(ValueError):
        corollary_check(get_preset("cubic2d"), 1)


def test_collision_pairs_verify_against_the_map():
    fmap = example_family().map
    pairs = collision_search(fmap, (-2, 2), 0.1, max_pairs=20)
    assert pairs
    comp = compile_exprs(fmap.components, 3)
    for c in pairs:
        fp, fq = comp.at_points(np.array([c.p, c.q]))
        assert np.linalg.norm(fp - fq) <= 1e-9 * max(1, np.linalg.norm(fp))
        assert np.linalg.norm(np.subtract(c.p, c.q)) > 0.1


def test_no_collisions_for_injective_shear():
    assert collision_search(get_preset("blockP"), (-2, 2), 0.2) == []


def test_ray_directions_are_unit():
    for n, k in ((2, 16), (3, 64)):
        D = ray_directions(n, k)
        assert np.allclose(np.linalg.norm(D, axis=1), 1.0)


def test_jelonek_limits_of_compress2d_sit_on_lines():
    res = jelonek_probe(get_preset("compress2d"), 64, 1e3)
    assert res.clusters
    for c in res.clusters:
        assert abs(abs(c["center"][1]) - 1) < 1e-3


def test_counts_cubic_are_one():
    cubic = get_preset("cubic2d")
    res = component_count_check(cubic, [(0.0, 0.0), (2.0, -1.0)], (-3, 3), 0.1)
    assert res.verdict == "consistent with injectivity"


@pytest.mark.parametrize("ylo,yhi", [(-10, 10), (-20, 20), (-3, 9)])
def test_spiral_count_matches_translate_formula(ylo, yhi):
    res = component_count_check(get_preset("expspiral"), [(1.0, 0.0)], [(-1, 1), (ylo, yhi), (-1, 1)], 0.1,
                                drop_index=3)
    want = math.floor(yhi / (2 * math.pi)) - math.ceil(ylo / (2 * math.pi)) + 1
    assert res.per_level[0]["d"] == want
