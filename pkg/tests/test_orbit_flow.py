import math

import numpy as np
import pytest

from fiberscope.field_builder import delta_field
from fiberscope.orbit_flow import (
    TraceOptions,
    conservation_check,
    escape_return_probe,
    halton_seeds,
    integrate,
    monotonicity_check,
    trace,
    trace_many,
)
from fiberscope.presets import circle_map, example_family, get_preset
from fiberscope.scalar_expr import MapSpec, parse_map


def test_integrator_exponential_decay():
    rhs = lambda Y, rows: -Y
    Y0 = np.array([[1.0], [2.0]])
    branches = integrate(rhs, Y0, 3.0, rtol=1e-10, atol=1e-13)
    for b, y0 in zip(branches, (1.0, 2.0)):
        assert b.reason == "horizon"
        assert math.isclose(b.t[-1], 3.0)
        assert abs(b.y[-1, 0] - y0 * math.exp(-3.0)) < 1e-9


def test_integrator_rotation_is_periodic():
    rhs = lambda Y, rows: np.stack([-Y[:, 1], Y[:, 0]], 1)
    b = integrate(rhs, np.array([[1.0, 0.0]]), 2 * math.pi, rtol=1e-11, atol=1e-14)[0]
    assert np.allclose(b.y[-1], [1.0, 0.0], atol=1e-8)


def test_arclength_parametrisation_has_unit_speed():
    fam = example_family()
    X = delta_field(fam.map, 2)
    tr = trace(X, [0.3, -0.2, 0.5], 5.0)
    for b in tr.branches:
        assert np.allclose(np.linalg.norm(b.dy, axis=1), 1.0, atol=1e-12)
        assert math.isclose(b.t[-1], 5.0)
    t, Y = tr.samples()
    assert np.all(np.diff(t) > 0) and np.allclose(Y[np.argmin(np.abs(t))], tr.seed)


@pytest.mark.parametrize("i", [1, 2, 3])
def test_conservation_along_example_orbits(i):
    fam = example_family()
    X = delta_field(fam.map, i)
    trs = trace_many(X, halton_seeds((-1.5, 1.5), 6, 3), 10.0)
    for tr in trs:
        assert conservation_check(tr, fam.map, i)["max_drift"] < 1e-7
        v = monotonicity_check(tr, fam.map, i, X=X)
        assert v.ok and v.sign != 0


def test_monotone_sign_matches_jacobian_sign():
    fam = example_family()
    X = delta_field(fam.map, 1)
    v = monotonicity_check(trace(X, [0.0, 0.0, 0.0], 2.0), fam.map, 1, X=X)
    assert v.sign == -1  # J(F) < 0 everywhere


def test_escape_radius_event_is_logged():
    # Delta_3 of the shear (x1, x2 + x1^2, x3) points along x3
    fmap = get_preset("blockP")
    X = delta_field(fmap, 3)
    tr = trace(X, [0.0, 0.0, 0.0], 50.0, TraceOptions(escape_radii=(10.0,)))
    names = {e["kind"] for e in tr.events}
    assert "radius:10" in names


def test_equilibrium_is_diagnosed():
    X = delta_field(circle_map(), 2)
    tr = trace(X, [0.0, 0.0], 1.0)
    assert set(tr.termination.values()) == {"equilibrium"}


def test_domain_error_is_diagnosed():
    fmap = parse_map("#semialgebraic\nf1 = x1\nf2 = x2 + sqrt(x1)\n")
    X = delta_field(fmap, 1)  # (1, -1/(2 sqrt(x1))): backwards it reaches x1 = 0
    tr = trace(X, [1.0, 0.0], 5.0)
    assert "domain_error" in tr.termination.values()


def test_halton_seeds_are_deterministic_and_inside():
    a = halton_seeds((-2, 2), 50, 3)
    assert np.array_equal(a, halton_seeds((-2, 2), 50, 3))
    assert a.shape == (50, 3) and np.all(np.abs(a) < 2) and not np.any(np.all(a == -2, axis=1))


def test_probe_finds_trapped_circle_orbit():
    w = escape_return_probe(delta_field(circle_map(), 2), (-2, 2), seeds=8)
    assert w.found and w.trapped and w.verdict == "witness found"


def test_probe_on_shear_has_no_return():
    w = escape_return_probe(delta_field(get_preset("cubic2d"), 1), (-2, 2), seeds=8)
    assert not w.found and w.verdict == "no witness at scale"


def test_probe_rejects_bad_ladder():
    X = delta_field(circle_map(), 2)
    with pytest.raises(ValueError):
        escape_return_probe(X, (-2, 2), ladder=(10, 5))
    with pytest.raises(ValueError):
        escape_return_probe(X, (-2, 2), ladder=(1, 5))
