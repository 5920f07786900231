"""Exact real-root analysis of univariate polynomials over Q.

Everything here is rational arithmetic on ``fractions.Fraction``; no
floating point is used for any decision.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

Endpoint = Fraction | None  # None stands for -inf on the left, +inf on the right


def _q(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


@dataclass(frozen=True)
class UniPoly:
    """Polynomial with rational coefficients in ascending degree order."""

    coeffs: tuple[Fraction, ...]

    def __post_init__(self):
        cs = [_q(c) for c in self.coeffs]
        while cs and cs[-1] == 0:
            cs.pop()
        object.__setattr__(self, "coeffs", tuple(cs))

    @classmethod
    def constant(cls, c) -> "UniPoly":
        return cls((c,))

    @classmethod
    def monomial(cls, k: int, c=1) -> "UniPoly":
        return cls((0,) * k + (c,))

    @classmethod
    def parse(cls, text: str) -> "UniPoly":
        """Read ``c0 + c1*t + ...`` (any polynomial expression in t or z)."""
        from .scalar_expr import parse_expr, restrict_to_line

        e = parse_expr(text, n=1, aliases={"t": 1, "z": 1, "x": 1})
        return restrict_to_line(e, [0], [1])

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    @property
    def degree(self) -> int:
        """Degree; -1 for the zero polynomial."""
        return len(self.coeffs) - 1

    @property
    def lc(self) -> Fraction:
        return self.coeffs[-1] if self.coeffs else Fraction(0)

    def __call__(self, x) -> Fraction:
        acc = Fraction(0)
        x = _q(x)
        for c in reversed(self.coeffs):
            acc = acc * x + c
        return acc

    def __add__(self, other) -> "UniPoly":
        other = _as_poly(other)
        a, b = self.coeffs, other.coeffs
        if len(a) < len(b):
            a, b = b, a
        return UniPoly(tuple(x + (b[i] if i < len(b) else 0) for i, x in enumerate(a)))

    __radd__ = __add__

    def __neg__(self) -> "UniPoly":
        return UniPoly(tuple(-c for c in self.coeffs))

    def __sub__(self, other) -> "UniPoly":
        return self + (-_as_poly(other))

    def __rsub__(self, other) -> "UniPoly":
        return _as_poly(other) - self

    def __mul__(self, other) -> "UniPoly":
        other = _as_poly(other)
        if self.is_zero or other.is_zero:
            return UniPoly(())
        out = [Fraction(0)] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            if a:
                for j, b in enumerate(other.coeffs):
                    out[i + j] += a * b
        return UniPoly(tuple(out))

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "UniPoly":
        if k < 0:
            raise ValueError("negative powers are not polynomials")
        result, base = UniPoly((1,)), self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def __divmod__(self, other) -> tuple["UniPoly", "UniPoly"]:
        other = _as_poly(other)
        if other.is_zero:
            raise ZeroDivisionError("polynomial division by zero")
        rem = list(self.coeffs)
        dq = other.degree
        quo = [Fraction(0)] * max(len(rem) - dq, 0)
        lc = other.lc
        for k in range(len(rem) - 1, dq - 1, -1):
            c = rem[k] / lc
            quo[k - dq] = c
            if c:
                for j, b in enumerate(other.coeffs):
                    rem[k - dq + j] -= c * b
        return UniPoly(tuple(quo)), UniPoly(tuple(rem[:dq]))

    def __floordiv__(self, other):
        return divmod(self, other)[0]

    def __mod__(self, other):
        return divmod(self, other)[1]

    def derivative(self, k: int = 1) -> "UniPoly":
        cs = list(self.coeffs)
        for _ in range(k):
            cs = [i * c for i, c in enumerate(cs)][1:]
        return UniPoly(tuple(cs))

    def monic(self) -> "UniPoly":
        if self.is_zero:
            return self
        return UniPoly(tuple(c / self.lc for c in self.coeffs))

    def primitive(self) -> "UniPoly":
        """Integer coefficients with gcd 1 and positive leading coefficient."""
        if self.is_zero:
            return self
        den = math.lcm(*(c.denominator for c in self.coeffs))
        ints = [int(c * den) for c in self.coeffs]
        g = math.gcd(*ints)
        sign = 1 if ints[-1] > 0 else -1
        return UniPoly(tuple(Fraction(sign * c, g) for c in ints))

    def compose_affine(self, a, b) -> "UniPoly":
        """p(a + b t)."""
        line = UniPoly((a, b))
        acc = UniPoly(())
        for c in reversed(self.coeffs):
            acc = acc * line + c
        return acc

    def __str__(self) -> str:
        if self.is_zero:
            return "0"
        parts = []
        for k, c in enumerate(self.coeffs):
            if c == 0:
                continue
            cs = str(c) if c >= 0 else f"({c})"
            parts.append(cs if k == 0 else f"{cs}*t" if k == 1 else f"{cs}*t^{k}")
        return " + ".join(parts)

    def to_floats(self) -> list[float]:
        return [float(c) for c in self.coeffs]


def _as_poly(x) -> UniPoly:
    return x if isinstance(x, UniPoly) else UniPoly.constant(x)


def poly_gcd(a: UniPoly, b: UniPoly) -> UniPoly:
    """Monic gcd (zero if both are zero)."""
    while not b.is_zero:
        a, b = b, a % b
    return a.monic()


def sqf_part(p: UniPoly) -> UniPoly:
    """Square-free part, monic."""
    if p.is_zero:
        raise ValueError("zero polynomial")
    if p.degree <= 0:
        return UniPoly((1,))
    return (p // poly_gcd(p, p.derivative())).monic()


def sqf_list(p: UniPoly) -> list[tuple[UniPoly, int]]:
    """Yun's square-free decomposition: [(factor, multiplicity), ...] with
    monic, pairwise coprime, non-constant factors."""
    if p.is_zero:
        raise ValueError("zero polynomial")
    if p.degree <= 0:
        return []
    out = []
    a = p.monic()
    b = a.derivative()
    c = poly_gcd(a, b)
    w = a // c
    y = b // c
    z = y - w.derivative()
    k = 1
    while w.degree > 0:
        g = poly_gcd(w, z)
        if g.degree > 0:
            out.append((g, k))
        w = w // g
        y = z // g
        z = y - w.derivative()
        k += 1
    return out


# ---------------------------------------------------------------------------
# Sturm sequences


def sturm_chain(p: UniPoly) -> list[UniPoly]:
    """Sturm sequence p, p', -rem(p, p'), ... (not normalised)."""
    if p.is_zero:
        raise ValueError("Sturm chain of the zero polynomial")
    chain = [p]
    if p.degree <= 0:
        return chain
    chain.append(p.derivative())
    while True:
        r = chain[-2] % chain[-1]
        if r.is_zero:
            return chain
        chain.append(-r)


def _sign(x: Fraction) -> int:
    return (x > 0) - (x < 0)


def _one_sided_sign(q: UniPoly, x: Fraction, side: int) -> int:
    """Sign of q just right (side=+1) or just left (side=-1) of x."""
    k = 0
    d = q
    while not d.is_zero:
        s = _sign(d(x))
        if s:
            return s if (side > 0 or k % 2 == 0) else -s
        d = d.derivative()
        k += 1
    return 0


def _sign_at_infinity(q: UniPoly, side: int) -> int:
    s = _sign(q.lc)
    return s if (side > 0 or q.degree % 2 == 0) else -s


def _variations(signs: Iterable[int]) -> int:
    prev, count = 0, 0
    for s in signs:
        if s == 0:
            continue
        if prev and s != prev:
            count += 1
        prev = s
    return count


def sign_variations(chain: Sequence[UniPoly], x: Endpoint, side: int) -> int:
    """Variations of the chain at x^+ (side=+1) or x^- (side=-1); x=None is
    -inf for side=+1 and +inf for side=-1."""
    if x is None:
        return _variations(_sign_at_infinity(q, -side) for q in chain)
    return _variations(_one_sided_sign(q, x, side) for q in chain)


def _interval(interval) -> tuple[Endpoint, Endpoint]:
    if interval is None:
        return None, None
    if isinstance(interval, str):
        return NAMED_INTERVALS[interval]
    a, b = interval

    def conv(x, inf_sign):
        if x is None:
            return None
        if isinstance(x, float) and math.isinf(x):
            if (x > 0) != (inf_sign > 0):
                raise ValueError("infinite endpoint on the wrong side")
            return None
        return _q(x)

    a, b = conv(a, -1), conv(b, +1)
    if a is not None and b is not None and a >= b:
        raise ValueError(f"empty interval ({a}, {b})")
    return a, b


NAMED_INTERVALS: dict[str, tuple[Endpoint, Endpoint]] = {
    "I1": (None, Fraction(-1)),
    "I2": (Fraction(-1), Fraction(1)),
    "I3": (Fraction(1), None),
    "R": (None, None),
}


def count_roots(p: UniPoly, interval=None) -> int:
    """Number of distinct real roots of p in the open interval.

    Endpoints equal to roots are handled exactly through one-sided signs of
    the Sturm chain of the square-free part.
    """
    if p.is_zero:
        raise ValueError("count_roots of the zero polynomial")
    a, b = _interval(interval)
    q = sqf_part(p)
    if q.degree <= 0:
        return 0
    chain = sturm_chain(q)
    return sign_variations(chain, a, +1) - sign_variations(chain, b, -1)


# ---------------------------------------------------------------------------
# isolation


@dataclass(frozen=True)
class RootInterval:
    """Open interval (lo, hi) holding exactly one root of ``factor``; a
    degenerate interval lo == hi is an exact rational root."""

    lo: Fraction
    hi: Fraction
    factor: UniPoly
    multiplicity: int = 1

    @property
    def is_exact(self) -> bool:
        return self.lo == self.hi

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo

    @property
    def approx(self) -> float:
        return float((self.lo + self.hi) / 2)

    def contains(self, x) -> bool:
        x = _q(x)
        return x == self.lo if self.is_exact else self.lo < x < self.hi

    def bisect(self) -> "RootInterval":
        if self.is_exact:
            return self
        f = self.factor
        m = (self.lo + self.hi) / 2
        fm = f(m)
        if fm == 0:
            return RootInterval(m, m, f, self.multiplicity)
        flo = f(self.lo)
        if flo == 0:
            # lo is a neighbouring exact root; decide from the other end
            fhi = f(self.hi)
            if fhi == 0:
                left = count_roots(f, (self.lo, m)) == 1
            else:
                left = _sign(fm) == _sign(fhi)
        else:
            left = _sign(fm) != _sign(flo)
        if left:
            return RootInterval(self.lo, m, f, self.multiplicity)
        return RootInterval(m, self.hi, f, self.multiplicity)

    def refine(self, width) -> "RootInterval":
        width = _q(width)
        r = self
        while not r.is_exact and r.width > width:
            r = r.bisect()
        return r


@dataclass(frozen=True)
class RootIsolation:
    roots: tuple[RootInterval, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.roots)

    def __iter__(self):
        return iter(self.roots)

    def __getitem__(self, k) -> RootInterval:
        return self.roots[k]

    def refine(self, width) -> "RootIsolation":
        return RootIsolation(tuple(r.refine(width) for r in self.roots))

    @property
    def multiplicities(self) -> list[int]:
        return [r.multiplicity for r in self.roots]


def root_bound(p: UniPoly) -> Fraction:
    """A power of two strictly exceeding |r| for every complex root r."""
    lc = abs(p.lc)
    cauchy = 1 + max((abs(c) / lc for c in p.coeffs[:-1]), default=Fraction(0))
    b = Fraction(1)
    while b <= cauchy:
        b *= 2
    return b


def _isolate_squarefree(f: UniPoly, mult: int) -> list[RootInterval]:
    bound = root_bound(f)
    out = []
    stack = [(-bound, bound)]
    while stack:
        a, b = stack.pop()
        c = count_roots(f, (a, b))
        if c == 0:
            continue
        if c == 1:
            out.append(RootInterval(a, b, f, mult))
            continue
        m = (a + b) / 2
        if f(m) == 0:
            out.append(RootInterval(m, m, f, mult))
        stack.append((m, b))
        stack.append((a, m))
    return out


def separate(roots: Sequence[RootInterval]) -> list[RootInterval]:
    """Sort distinct roots and refine until hi_k < lo_{k+1} strictly."""
    rs = list(roots)
    while True:
        rs.sort(key=lambda r: (r.lo + r.hi) / 2)
        clash = False
        for k in range(len(rs) - 1):
            r, s = rs[k], rs[k + 1]
            if not r.hi < s.lo:
                clash = True
                if r.is_exact and s.is_exact:
                    raise ValueError("two isolating intervals describe the same root")
                if not r.is_exact:
                    rs[k] = r.bisect()
                if not s.is_exact:
                    rs[k + 1] = s.bisect()
        if not clash:
            return rs


def isolate_roots(p: UniPoly) -> RootIsolation:
    """Disjoint sorted isolating intervals of all real roots of p, with
    multiplicities from the square-free decomposition."""
    if p.is_zero:
        raise ValueError("isolate_roots of the zero polynomial")
    found = []
    for f, k in sqf_list(p):
        found.extend(_isolate_squarefree(f, k))
    return RootIsolation(tuple(separate(found)))


# ---------------------------------------------------------------------------
# signs and shape


class Sign(enum.Enum):
    POSITIVE = "Positive"
    NEGATIVE = "Negative"
    MIXED = "Mixed"


def _sample_point(a: Endpoint, b: Endpoint) -> Fraction:
    if a is None and b is None:
        return Fraction(0)
    if a is None:
        return b - 1
    if b is None:
        return a + 1
    return (a + b) / 2


def certify_sign(p: UniPoly, interval=None) -> Sign:
    """POSITIVE / NEGATIVE only if p has no root on the closure of the
    interval (infinite ends excluded); MIXED otherwise."""
    if p.is_zero:
        raise ValueError("certify_sign of the zero polynomial")
    a, b = _interval(interval)
    if count_roots(p, (a, b)) > 0:
        return Sign.MIXED
    for end in (a, b):
        if end is not None and p(end) == 0:
            return Sign.MIXED
    return Sign.POSITIVE if p(_sample_point(a, b)) > 0 else Sign.NEGATIVE


@dataclass(frozen=True)
class MonotonicityProfile:
    critical_points: tuple[RootInterval, ...]
    pattern: tuple[str, ...]  # "rise" / "fall" on the pieces between critical points

    @property
    def extrema(self) -> list[str]:
        """"max", "min" or "flat" at each critical point."""
        out = []
        for k in range(len(self.critical_points)):
            left, right = self.pattern[k], self.pattern[k + 1]
            out.append("max" if (left, right) == ("rise", "fall") else
                       "min" if (left, right) == ("fall", "rise") else "flat")
        return out


def _gap_samples(roots: Sequence[RootInterval], a: Endpoint = None, b: Endpoint = None) -> list[Fraction]:
    """One rational point in each gap of (a, b) cut at the (separated) roots."""
    if not roots:
        return [_sample_point(a, b)]
    out = [roots[0].lo - 1 if a is None else (a + roots[0].lo) / 2]
    for r, s in zip(roots, roots[1:]):
        out.append((r.hi + s.lo) / 2)
    out.append(roots[-1].hi + 1 if b is None else (roots[-1].hi + b) / 2)
    return out


def monotonicity_profile(p: UniPoly) -> MonotonicityProfile:
    if p.degree < 1:
        raise ValueError("monotonicity profile of a constant polynomial")
    d = p.derivative()
    crit = list(isolate_roots(d)) if d.degree > 0 else []
    pattern = tuple("rise" if d(x) > 0 else "fall" for x in _gap_samples(crit))
    return MonotonicityProfile(tuple(crit), pattern)


def roots_in_open_interval(p: UniPoly, interval) -> list[RootInterval]:
    """Isolating intervals of the distinct roots of p lying in the open
    interval, each refined to sit strictly inside it."""
    a, b = _interval(interval)
    q = sqf_part(p)
    for end in (a, b):
        if end is not None and q(end) == 0:
            q = q // UniPoly((-end, 1))
    if q.degree <= 0:
        return []
    out = []
    for r in separate(_isolate_squarefree(q, 1)):
        while True:
            if (a is not None and r.hi <= a) or (b is not None and r.lo >= b):
                break
            if (a is None or r.lo > a) and (b is None or r.hi < b):
                out.append(r)
                break
            r = r.bisect()
    return out


@dataclass(frozen=True)
class PreimageCheck:
    connected: bool
    pieces: tuple[tuple[Endpoint, Endpoint], ...]  # rational brackets of each piece
    breakpoints: tuple[RootInterval, ...]

    @property
    def verdict(self) -> str:
        return "Connected" if self.connected else "Disconnected"


def preimage_interval_check(p: UniPoly, L, interval) -> PreimageCheck:
    """Is {z in interval : -L < p(z) < L} a single interval (or empty)?

    Boundary points of the set inside the interval are the roots of p - L
    and p + L there; the set is the union of the gaps between consecutive
    boundary points on which |p| < L.
    """
    if p.degree < 1:
        raise ValueError("preimage check needs a non-constant polynomial")
    L = _q(L)
    if L <= 0:
        raise ValueError("L must be positive")
    a, b = _interval(interval)
    cuts = roots_in_open_interval(p - L, (a, b)) + roots_in_open_interval(p + L, (a, b))
    cuts = separate(cuts)
    samples = _gap_samples(cuts, a, b)
    bounds = [a] + cuts + [b]
    pieces = []
    for k, x in enumerate(samples):
        if -L < p(x) < L:
            left, right = bounds[k], bounds[k + 1]
            lo = left if left is None or isinstance(left, Fraction) else left.lo
            hi = right if right is None or isinstance(right, Fraction) else right.hi
            pieces.append((lo, hi))
    return PreimageCheck(len(pieces) <= 1, tuple(pieces), tuple(cuts))
