from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fiberscope.presets import (
    PRESET_NAMES,
    ExampleFamilyParams,
    example_family,
    g_expr,
    g_poly,
    get_preset,
    k_alpha_poly,
    m_poly,
)
from fiberscope.scalar_expr import evaluate, evaluate_exact

hs = st.fractions(min_value=Fraction(1, 10), max_value=50, max_denominator=20)


@given(hs)
def test_g_endpoint_values(h):
    g = g_poly(h)
    assert g(1) == h and g(-1) == -h
    assert g(Fraction(3, 2)) == g(Fraction(-3, 2)) == g(0) == 0


@given(hs, st.fractions(min_value=-3, max_value=3, max_denominator=9))
def test_g_expr_matches_polynomial(h, z):
    assert evaluate_exact(g_expr(h), [0, 0, z]) == g_poly(h)(z)


@given(st.fractions(min_value=-20, max_value=20, max_denominator=9), hs)
def test_k_alpha_endpoints(alpha, h):
    k = k_alpha_poly(alpha, h)
    assert k(1) == -h and k(-1) == h


def test_m_polynomial():
    assert m_poly().coeffs == (63, 0, 60, 0, -59, 0, 36)


def test_params_validation_and_strings():
    p = ExampleFamilyParams(1, Fraction(5, 2), 3)
    assert p.as_strings() == {"L": "1/1", "h1": "5/2", "h2": "3/1"}
    for bad in ((1, 1, 3), (1, 3, 2), (0, 2, 3)):
        with pytest.raises(ValueError):
            ExampleFamilyParams(*bad)


def test_example_values_at_special_points():
    fam = example_family()
    F = fam.map
    assert [evaluate_exact(f, [0, 0, Fraction(3, 2)]) for f in F.components] == [0, 0, Fraction(-5, 4)]
    assert [evaluate_exact(f, [0, 0, 1]) for f in F.components] == [2, 3, 0]


def test_closed_form_sign_is_constant():
    fam = example_family()
    rng = np.random.default_rng(3)
    vals = [evaluate(fam.jacobian_closed_form(), p) for p in rng.uniform(-5, 5, (200, 3))]
    assert all(v < 0 for v in vals)


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_presets_build(name):
    fmap = get_preset(name)
    assert fmap.n in (2, 3)
    assert fmap.semialgebraic == (name != "expspiral")


def test_unknown_preset():
    with pytest.raises(KeyError):
        get_preset("pinchuk")
