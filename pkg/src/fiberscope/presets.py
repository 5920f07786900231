"""Ready-made maps with exact parameters.

``example`` is the three-parameter semialgebraic family built from
A(x) = L x / sqrt(1 + x^2), E(y) = y + sqrt(1 + y^2) and the quintic g_h;
the catalog adds four reference maps used to exercise the probes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .poly_real import UniPoly
from .scalar_expr import Expr, MapSpec, parse_expr, parse_map, const, var, sqrt

PRESET_NAMES = ("example", "cubic2d", "expspiral", "compress2d", "blockP")


def _q(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(str(x)) if isinstance(x, float) else Fraction(x)


@dataclass(frozen=True)
class ExampleFamilyParams:
    L: Fraction = Fraction(1)
    h1: Fraction = Fraction(2)
    h2: Fraction = Fraction(3)

    def __post_init__(self):
        for name in ("L", "h1", "h2"):
            object.__setattr__(self, name, _q(getattr(self, name)))
        if self.L <= 0:
            raise ValueError("L must be positive")
        if not self.h1 > self.L:
            raise ValueError(f"need h1 > L, got h1={self.h1}, L={self.L}")
        if not self.h2 > self.h1:
            raise ValueError(f"need h2 > h1, got h1={self.h1}, h2={self.h2}")

    def as_strings(self) -> dict[str, str]:
        return {k: f"{v.numerator}/{v.denominator}" for k, v in
                (("L", self.L), ("h1", self.h1), ("h2", self.h2))}


def g_poly(h) -> UniPoly:
    """g_h(z) = -(h/50) z (2z+3)(2z-3)(3z^2+7), expanded."""
    h = _q(h)
    z = UniPoly((0, 1))
    return -(h / 50) * z * UniPoly((3, 2)) * UniPoly((-3, 2)) * UniPoly((7, 0, 3))


def g_expr(h, k: int = 3) -> Expr:
    h = _q(h)
    z = var(k)
    return const(-h / 50) * z * (2 * z + 3) * (2 * z - 3) * (3 * z**2 + 7)


def A_expr(L, k: int = 1) -> Expr:
    x = var(k)
    return const(_q(L)) * x / sqrt(1 + x**2)


def E_expr(k: int = 2) -> Expr:
    y = var(k)
    return y + sqrt(1 + y**2)


def m_poly() -> UniPoly:
    return UniPoly((63, 0, 60, 0, -59, 0, 36))


def k_alpha_poly(alpha, h) -> UniPoly:
    """k_alpha(z) = alpha (1 - z^2) - g_h(z)."""
    h = _q(h)
    if h <= 0:
        raise ValueError("h must be positive")
    alpha = _q(alpha)
    return alpha * UniPoly((1, 0, -1)) - g_poly(h)


@dataclass(frozen=True)
class ExampleFamily:
    params: ExampleFamilyParams
    map: MapSpec
    parts: dict[str, Expr] = field(default_factory=dict)

    def f_h(self, h) -> Expr:
        """The single function (A(x) + g_h(z)) E(y) as a one-row helper."""
        return (A_expr(self.params.L) + g_expr(h)) * E_expr()

    def jacobian_closed_form(self) -> Expr:
        """((h1 - h2)/50) E(y)^2 E'(y) A'(x) m(z), built independently of
        the cofactor machinery."""
        p = self.params
        x, y, z = var(1), var(2), var(3)
        E = E_expr()
        dE = 1 + y / sqrt(1 + y**2)
        dA = const(p.L) / (sqrt(1 + x**2) * (1 + x**2))
        m = 36 * z**6 - 59 * z**4 + 60 * z**2 + 63
        return const((p.h1 - p.h2) / 50) * E**2 * dE * dA * m


def example_family(params: ExampleFamilyParams | None = None, **kw) -> ExampleFamily:
    p = params or ExampleFamilyParams(**kw)
    A, E = A_expr(p.L), E_expr()
    g1, g2 = g_expr(p.h1), g_expr(p.h2)
    z = var(3)
    f1 = (A + g1) * E
    f2 = (A + g2) * E
    f3 = (1 - z**2) * E
    fmap = MapSpec((f1, f2, f3), labels=("f_h1", "f_h2", "f3"), semialgebraic=True, name="example")
    parts = {"A": A, "E": E, "g_h1": g1, "g_h2": g2, "f_h1": f1, "f_h2": f2, "f3": f3}
    return ExampleFamily(p, fmap, parts)


_REFERENCE_TEXT = {
    "cubic2d": "#semialgebraic\nf1 = x1*(x1^2 + 1)\nf2 = x2*(x2^2 + 1)\n",
    "expspiral": "f1 = exp(x1)*cos(x2)\nf2 = exp(x1)*sin(x2)\nf3 = x3\n",
    "compress2d": "#semialgebraic\nf1 = x1\nf2 = x2/sqrt(1 + x2^2)\n",
    # block structure (P(x, y), z) with a stand-in P; not a Pinchuk map
    "blockP": "#semialgebraic\nf1 = x1\nf2 = x2 + x1^2\nf3 = x3\n",
}


def reference_maps() -> dict[str, MapSpec]:
    return {name: parse_map(text, name=name) for name, text in _REFERENCE_TEXT.items()}


def reference_text(name: str) -> str:
    return _REFERENCE_TEXT[name]


def get_preset(name: str, L=1, h1=2, h2=3) -> MapSpec:
    if name == "example":
        return example_family(ExampleFamilyParams(L, h1, h2)).map
    maps = reference_maps()
    if name not in maps:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    return maps[name]


def circle_map() -> MapSpec:
    """(x^2 + y^2, y): its second cofactor field rotates around the origin.
    Not a local diffeomorphism; used to check the trapped-orbit probe."""
    return MapSpec((parse_expr("x1^2 + x2^2", 2), var(2)), semialgebraic=True, name="circle")
