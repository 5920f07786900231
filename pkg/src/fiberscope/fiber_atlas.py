"""Fiber components, connectedness checks, collisions and non-properness
sampling.

Fibers of a single function (surfaces in R^3) are found as clusters of
grid cells where the function changes sign. Fibers of several functions
(curves, or points for the full map) are found by sampling a grid,
polishing nearby nodes onto the fiber with minimum-norm Gauss-Newton steps,
and linking the polished points within a fixed radius. Everything is
relative to a box; components leaving the box are flagged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .field_builder import JacobianExpr, box_bounds, delta_field
from .orbit_flow import TraceOptions, trace_many
from .poly_real import UniPoly, isolate_roots, preimage_interval_check, separate
from .presets import A_expr, E_expr, ExampleFamilyParams, g_expr, g_poly, k_alpha_poly
from .scalar_expr import (
    CompiledExprs,
    DomainError,
    MapSpec,
    NotExactError,
    compile_exprs,
    diff,
    evaluate_exact,
    var,
)

LINK_FACTOR = 3.0  # linking radius in units of the grid pitch


def _frac(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, float):
        return Fraction(str(v))
    return Fraction(v)


def _fstr(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


def _ftext(q: Fraction) -> str:
    return str(q) if q.denominator == 1 else f"({q})"


def _safe_eval(comp: CompiledExprs, P: np.ndarray) -> np.ndarray:
    """Evaluate at rows of P; rows outside the domain come back as NaN."""
    try:
        return comp.at_points(P)
    except DomainError:
        out = np.full((P.shape[0], len(comp.exprs)), np.nan)
        for r in range(P.shape[0]):
            try:
                out[r] = comp.at_points(P[r : r + 1])[0]
            except DomainError:
                pass
        return out


def _axes(lo: np.ndarray, hi: np.ndarray, pitch: float) -> list[np.ndarray]:
    if pitch <= 0:
        raise ValueError("pitch must be positive")
    return [np.linspace(a, b, max(int(round((b - a) / pitch)), 1) + 1) for a, b in zip(lo, hi)]


def _slab_points(axes: list[np.ndarray], i0: int) -> np.ndarray:
    rest = np.meshgrid(*axes[1:], indexing="ij")
    cols = [np.full(rest[0].size if rest else 1, axes[0][i0])] + [r.ravel() for r in rest]
    return np.stack(cols, axis=1)


def _cluster(P: np.ndarray, radius: float) -> tuple[int, np.ndarray]:
    if len(P) == 0:
        return 0, np.zeros(0, dtype=int)
    pairs = cKDTree(P).query_pairs(radius, output_type="ndarray")
    g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(P), len(P)))
    return connected_components(g, directed=False)


def _min_gap(P: np.ndarray, labels: np.ndarray, d: int) -> float:
    gap = math.inf
    for a in range(d):
        tree = cKDTree(P[labels == a])
        for b in range(a + 1, d):
            dist, _ = tree.query(P[labels == b], k=1)
            gap = min(gap, float(dist.min()))
    return gap


# ---------------------------------------------------------------------------
# component sets


@dataclass
class ComponentSet:
    level: list[float]
    equations: list[int]  # 1-based indices of the functions whose common level set this is
    box: list[list[float]]
    pitch: float
    linking_radius: float
    method: str  # "cells", "points" or "chart"
    d: int
    labels: np.ndarray
    points: np.ndarray
    components: list[dict] = field(default_factory=list)
    ambiguous: bool = False
    min_gap: float = math.inf
    cross_validation: dict | None = None
    cell_labels: np.ndarray | None = field(default=None, repr=False)
    axes: list[np.ndarray] | None = field(default=None, repr=False)

    @property
    def status(self) -> str:
        return "ambiguous" if self.ambiguous else "ok"

    @property
    def d_connected(self) -> int:
        """Count after merging box components joined by a traced orbit."""
        if self.cross_validation is None:
            return self.d
        return self.cross_validation["groups"]

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "equations": self.equations,
            "box": self.box,
            "pitch": self.pitch,
            "linking_radius": self.linking_radius,
            "method": self.method,
            "d": self.d,
            "status": self.status,
            "min_gap": None if math.isinf(self.min_gap) else self.min_gap,
            "components": self.components,
            "cross_validation": self.cross_validation,
        }


def _cell_components(
    fmap: MapSpec, eq: int, level: float, lo: np.ndarray, hi: np.ndarray, pitch: float
) -> ComponentSet:
    n = fmap.n
    comp = compile_exprs([fmap[eq]], n)
    axes = _axes(lo, hi, pitch)
    shape = tuple(len(a) - 1 for a in axes)
    cells = np.zeros(shape, dtype=bool)
    prev = None
    for i0 in range(len(axes[0])):
        P = _slab_points(axes, i0)
        v = _safe_eval(comp, P)[:, 0].reshape([len(a) for a in axes[1:]]) - level
        if prev is not None:
            mn, mx = np.minimum(prev, v), np.maximum(prev, v)
            for ax in range(n - 1):  # reduce over the 2^(n-1) corners of each face
                sl_a = [slice(None)] * (n - 1)
                sl_b = [slice(None)] * (n - 1)
                sl_a[ax], sl_b[ax] = slice(None, -1), slice(1, None)
                mn = np.minimum(mn[tuple(sl_a)], mn[tuple(sl_b)])
                mx = np.maximum(mx[tuple(sl_a)], mx[tuple(sl_b)])
            cells[i0 - 1] = (mn <= 0) & (mx >= 0) & ~((mn == 0) & (mx == 0))
        prev = v
    structure = np.ones((3,) * n, dtype=bool)
    labels, d = ndimage.label(cells, structure=structure)
    ambiguous = False
    if d > 1:
        big = np.iinfo(np.int32).max
        mx = ndimage.maximum_filter(labels, size=3)
        mn = ndimage.minimum_filter(np.where(labels > 0, labels, big), size=3)
        ambiguous = bool(np.any((mn < big) & (mx != mn)))
    steps = np.array([(a[-1] - a[0]) / (len(a) - 1) for a in axes])
    comps = []
    objs = ndimage.find_objects(labels)
    for k, sl in enumerate(objs, start=1):
        lo_idx = np.array([s.start for s in sl])
        hi_idx = np.array([s.stop for s in sl])
        exits = bool(np.any(lo_idx == 0) or np.any(hi_idx == np.array(shape)))
        sub = labels[sl] == k
        first = np.argwhere(sub)[0] + lo_idx
        comps.append({
            "index": k - 1,
            "cells": int(sub.sum()),
            "bbox": np.stack([lo + lo_idx * steps, lo + hi_idx * steps], axis=1).tolist(),
            "exits_box": exits,
            "representative": (lo + (first + 0.5) * steps).tolist(),
        })
    centers = np.array([c["representative"] for c in comps]).reshape(-1, n)
    return ComponentSet(
        level=[float(level)], equations=[eq], box=np.stack([lo, hi], 1).tolist(), pitch=float(steps.max()),
        linking_radius=float(np.linalg.norm(steps)), method="cells", d=int(d),
        labels=np.arange(d), points=centers, components=comps, ambiguous=ambiguous,
        cell_labels=labels, axes=axes,
    )


class _System:
    """Residuals and gradients of a subset of the map's components."""

    def __init__(self, fmap: MapSpec, eqs: Sequence[int]):
        n = fmap.n
        self.n, self.k = n, len(eqs)
        self.values = compile_exprs([fmap[j] for j in eqs], n)
        self.grads = compile_exprs([diff(fmap[j], c) for j in eqs for c in range(1, n + 1)], n)

    def residual(self, P: np.ndarray, level: np.ndarray) -> np.ndarray:
        return _safe_eval(self.values, P) - level

    def jac(self, P: np.ndarray) -> np.ndarray:
        return _safe_eval(self.grads, P).reshape(-1, self.k, self.n)


def _min_norm_step(J: np.ndarray, r: np.ndarray) -> np.ndarray:
    """J^+ r for a batch of k x n Jacobians of full row rank."""
    with np.errstate(all="ignore"):
        try:
            G = J @ np.swapaxes(J, 1, 2)
            w = np.linalg.solve(G, r[..., None])[..., 0]
            return np.einsum("mkn,mk->mn", J, w)
        except np.linalg.LinAlgError:
            return np.einsum("mnk,mk->mn", np.linalg.pinv(J), r)


def _polish(sys: _System, P: np.ndarray, level: np.ndarray, max_move: float, iters: int = 30, tol: float = 1e-11):
    """Gauss-Newton projection of P onto the level set; returns the
    converged points."""
    X = P.copy()
    alive = np.ones(len(X), dtype=bool)
    for _ in range(iters):
        idx = np.nonzero(alive)[0]
        if idx.size == 0:
            break
        r = sys.residual(X[idx], level)
        step = _min_norm_step(sys.jac(X[idx]), r)
        X[idx] -= step
        bad = ~np.all(np.isfinite(X[idx]), axis=1)
        bad |= np.linalg.norm(X[idx] - P[idx], axis=1) > max_move
        alive[idx[bad]] = False
        small = np.linalg.norm(step, axis=1) <= 1e-14 * (1 + np.linalg.norm(X[idx], axis=1))
        alive[idx[small]] = False
    ok = np.all(np.isfinite(X), axis=1) & (np.linalg.norm(X - P, axis=1) <= max_move)
    Xo = X[ok]
    if len(Xo):
        vals = _safe_eval(sys.values, Xo)
        scale = np.maximum(1.0, np.abs(vals))
        conv = np.all(np.abs(vals - level) <= tol * scale, axis=1)
        Xo = Xo[conv]
    return Xo


def _point_components(
    fmap: MapSpec, eqs: list[int], level: np.ndarray, lo: np.ndarray, hi: np.ndarray, pitch: float
) -> ComponentSet:
    n = fmap.n
    sys = _System(fmap, eqs)
    axes = _axes(lo, hi, pitch)
    steps = np.array([(a[-1] - a[0]) / (len(a) - 1) for a in axes])
    h = float(steps.max())
    thr = h * math.sqrt(n)
    cand = []
    for i0 in range(len(axes[0])):
        P = _slab_points(axes, i0)
        r = sys.residual(P, level)
        ok = np.all(np.isfinite(r), axis=1)
        P, r = P[ok], r[ok]
        if not len(P):
            continue
        coarse = np.abs(r).max(axis=1) <= 10 * thr * np.abs(sys.jac(P)).sum(axis=2).max(axis=1)
        P, r = P[coarse], r[coarse]
        if not len(P):
            continue
        dist = np.linalg.norm(_min_norm_step(sys.jac(P), r), axis=1)
        cand.append(P[dist < thr])
    C = np.vstack(cand) if cand else np.zeros((0, n))
    pts = _polish(sys, C, level, max_move=2 * thr) if len(C) else C
    span = hi - lo
    inside = np.all((pts >= lo - 1e-9 * span) & (pts <= hi + 1e-9 * span), axis=1)
    pts = pts[inside]
    if len(pts):  # thin duplicates on a quarter-pitch lattice
        _, keep = np.unique(np.round(pts / (h / 4)).astype(np.int64), axis=0, return_index=True)
        pts = pts[np.sort(keep)]
    link = LINK_FACTOR * h
    d, labels = _cluster(pts, link)
    gap = _min_gap(pts, labels, d) if d > 1 else math.inf
    comps = []
    for a in range(d):
        Q = pts[labels == a]
        qlo, qhi = Q.min(axis=0), Q.max(axis=0)
        exits = bool(np.any(qlo <= lo + link) or np.any(qhi >= hi - link)) if len(eqs) < n else False
        comps.append({
            "index": a,
            "points": int(len(Q)),
            "bbox": np.stack([qlo, qhi], axis=1).tolist(),
            "exits_box": exits,
            "representative": Q[np.argmin(np.linalg.norm(Q - Q.mean(axis=0), axis=1))].tolist(),
        })
    return ComponentSet(
        level=[float(v) for v in level], equations=list(eqs), box=np.stack([lo, hi], 1).tolist(), pitch=h,
        linking_radius=link, method="points", d=int(d), labels=labels, points=pts, components=comps,
        ambiguous=bool(gap < 2 * link), min_gap=gap,
    )


def _orbit_join(fmap: MapSpec, cs: ComponentSet, drop_index: int, horizon: float, rtol: float) -> dict:
    """Trace the drop_index field from one member of each cluster; clusters
    visited by the same orbit belong to one fiber component."""
    X = delta_field(fmap, drop_index)
    reps = np.array([c["representative"] for c in cs.components])
    opts = TraceOptions(rtol=rtol, atol=rtol * 1e-3, hmax=cs.linking_radius / 2)
    traces = trace_many(X, reps, horizon, opts)
    tree = cKDTree(cs.points)
    lo = np.array(cs.box)[:, 0]
    hi = np.array(cs.box)[:, 1]
    parent = list(range(cs.d))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    strays, own_ok, joins = 0, True, set()
    for a, tr in enumerate(traces):
        _, Y = tr.samples()
        inside = np.all((Y >= lo) & (Y <= hi), axis=1)
        dist, nn = tree.query(Y[inside], k=1)
        near = dist <= 2 * cs.linking_radius
        strays += int(np.sum(~near))
        visited = set(cs.labels[nn[near]].tolist())
        # the in-box stretch through the seed must stay in the seed's cluster
        t, _ = tr.samples()
        k0 = int(np.argmin(np.abs(t)))
        lo_k = k0
        while lo_k > 0 and inside[lo_k - 1]:
            lo_k -= 1
        hi_k = k0
        while hi_k + 1 < len(inside) and inside[hi_k + 1]:
            hi_k += 1
        d2, nn2 = tree.query(Y[lo_k : hi_k + 1], k=1)
        own = cs.labels[nn2[d2 <= 2 * cs.linking_radius]]
        if np.any(own != a):
            own_ok = False
        for b in visited:
            if b != a:
                joins.add((min(a, b), max(a, b)))
                parent[find(a)] = find(b)
    groups = len({find(a) for a in range(cs.d)})
    return {
        "agree": own_ok,
        "joins": sorted([list(j) for j in joins]),
        "groups": groups,
        "stray_samples": strays,
        "horizon": horizon,
    }


def enumerate_components(
    fmap: MapSpec,
    level: Sequence[float] | float,
    box,
    pitch: float = 0.1,
    *,
    drop_index: int | None = None,
    keep: Sequence[int] | None = None,
    cross_validate: bool = False,
    trace_horizon: float | None = None,
    rtol: float = 1e-9,
) -> ComponentSet:
    """Components of a fiber inside a box.

    The equations are all components except ``drop_index`` (a fiber of
    F_i), all of them (a fiber of F), or the explicit 1-based list ``keep``.
    ``level`` holds one value per equation.
    """
    n = fmap.n
    lo, hi = box_bounds(box, n)
    if keep is not None:
        eqs = [int(j) for j in keep]
    elif drop_index is not None:
        if not 1 <= drop_index <= n:
            raise IndexError(f"drop index {drop_index} out of range 1..{n}")
        eqs = [j for j in range(1, n + 1) if j != drop_index]
    else:
        eqs = list(range(1, n + 1))
    lv = np.atleast_1d(np.asarray(level, dtype=float))
    if lv.shape != (len(eqs),):
        raise ValueError(f"need {len(eqs)} level values, got {lv.size}")
    if not np.all(np.isfinite(lv)):
        raise ValueError("level must be finite")
    if len(eqs) == 1 and n > 1:
        return _cell_components(fmap, eqs[0], float(lv[0]), lo, hi, pitch)
    cs = _point_components(fmap, eqs, lv, lo, hi, pitch)
    if cross_validate and drop_index is not None and len(eqs) == n - 1 and cs.d:
        horizon = trace_horizon or 2.0 * float(np.linalg.norm(hi - lo))
        cs.cross_validation = _orbit_join(fmap, cs, drop_index, horizon, rtol)
    return cs


# ---------------------------------------------------------------------------
# census of single-function fibers for the example family


def Einv(u):
    """Inverse of E(y) = y + sqrt(1 + y^2) on u > 0."""
    return (u * u - 1) / (2 * u)


def Ainv(v, L):
    """Inverse of A(x) = L x / sqrt(1 + x^2) on |v| < L."""
    return v / np.sqrt(L * L - v * v)


def _z_pieces(cond, polys: Sequence[UniPoly]) -> list[tuple[float, float]]:
    """Maximal open z-intervals where ``cond`` holds, with the roots of
    ``polys`` as the only possible breakpoints (roots themselves excluded)."""
    width = Fraction(1, 2**20)
    roots = separate([r.refine(width) for p in polys for r in isolate_roots(p).roots])
    ends = [None] + roots + [None]
    pieces = []
    for a, b in zip(ends, ends[1:]):
        if a is None and b is None:
            x = Fraction(0)
        elif a is None:
            x = b.lo - 1
        elif b is None:
            x = a.hi + 1
        else:
            x = (a.hi + b.lo) / 2
        if cond(x):
            pieces.append((-math.inf if a is None else a.approx, math.inf if b is None else b.approx))
    return pieces


@dataclass
class CensusRow:
    function: str
    c: Fraction
    expected: int
    numeric: int | None
    method: str
    charts: list[str]
    z_pieces: list[tuple[float, float]]
    ambiguous: bool = False
    exits_box: list[bool] = field(default_factory=list)

    @property
    def sign_class(self) -> str:
        return "c<0" if self.c < 0 else "c=0" if self.c == 0 else "c>0"

    @property
    def agree(self) -> bool:
        return self.numeric == self.expected and not self.ambiguous

    def to_dict(self) -> dict:
        return {
            "function": self.function,
            "c": _fstr(self.c),
            "sign_class": self.sign_class,
            "expected": self.expected,
            "numeric": self.numeric,
            "method": self.method,
            "charts": self.charts,
            "z_pieces": [[a, b] for a, b in self.z_pieces],
            "ambiguous": self.ambiguous,
            "exits_box": self.exits_box,
            "agree": self.agree,
        }


@dataclass
class CensusResult:
    L: Fraction
    h: Fraction
    box: list
    pitch: float
    rows: list[CensusRow]

    @property
    def counts(self) -> dict[str, dict[str, int | None]]:
        out: dict[str, dict] = {}
        for r in self.rows:
            out.setdefault(r.function, {})[r.sign_class] = r.numeric
        return out

    @property
    def all_agree(self) -> bool:
        return all(r.agree for r in self.rows)

    def to_dict(self) -> dict:
        return {"L": _fstr(self.L), "h": _fstr(self.h), "box": self.box, "pitch": self.pitch,
                "rows": [r.to_dict() for r in self.rows], "all_agree": self.all_agree}


def _fmt_piece(a: float, b: float) -> str:
    fa = "-inf" if math.isinf(a) else f"{a:.6g}"
    fb = "inf" if math.isinf(b) else f"{b:.6g}"
    return f"{fa} < z < {fb}"


def _f3_row(c: Fraction, lo, hi) -> CensusRow:
    one_minus = UniPoly((1, 0, -1))
    if c == 0:
        planes = [z for z in (-1.0, 1.0) if lo[2] <= z <= hi[2]]
        return CensusRow("f3", c, 2, len(planes), "chart", ["z = -1", "z = 1"], [(-1.0, -1.0), (1.0, 1.0)],
                         exits_box=[True] * len(planes))
    pieces = _z_pieces(lambda z: one_minus(z) * c > 0, [one_minus])
    charts = [f"y = Einv({_ftext(c)}/(1 - z^2)), {_fmt_piece(a, b)}" for a, b in pieces]
    return CensusRow("f3", c, len(pieces), None, "cells", charts, pieces)


def _fh_row(c: Fraction, L: Fraction, h: Fraction) -> CensusRow:
    g = g_poly(h)
    if c == 0:
        pieces = _z_pieces(lambda z: -L < g(z) < L, [g - L, g + L])
        charts = [f"x = Ainv(-g_h(z)), {_fmt_piece(a, b)}" for a, b in pieces]
    else:
        s = 1 if c > 0 else -1
        # A(x) + g(z) must share the sign of c, possible iff s*g(z) > -L
        pieces = _z_pieces(lambda z: s * g(z) > -L, [g + s * L])
        rel = ">" if c > 0 else "<"
        charts = [f"y = Einv({_ftext(c)}/(A(x) + g_h(z))), A(x) + g_h(z) {rel} 0, {_fmt_piece(a, b)}"
                  for a, b in pieces]
    return CensusRow("f_h", c, len(pieces), None, "cells", charts, pieces)


def census_map(L, h) -> MapSpec:
    """(f_h, f3) as a map on R^3; only its single components are used."""
    L, h = _frac(L), _frac(h)
    z = var(3)
    E = E_expr()
    fh = (A_expr(L) + g_expr(h)) * E
    f3 = (1 - z**2) * E
    return MapSpec((fh, f3, z), labels=("f_h", "f3", "z"), semialgebraic=True, name="census")


def level_census(
    L=1,
    h=2,
    c_values: Sequence = (-1, 0, 1),
    box=(-6.0, 6.0),
    pitch: float = 0.1,
    numeric: bool = True,
) -> CensusResult:
    """Component counts of the fibers f_h = c and f3 = c.

    Expected counts come from the exact z-intervals on which a chart
    exists; numeric counts from sign-change cells in the box, except for
    f3 = 0, which is the pair of planes z = -1 and z = 1.
    """
    L, h = _frac(L), _frac(h)
    if not (L > 0 and h > L):
        raise ValueError("need h > L > 0")
    fmap = census_map(L, h)
    lo, hi = box_bounds(box, 3)
    rows = []
    for cv in c_values:
        c = _frac(cv)
        for row in (_fh_row(c, L, h), _f3_row(c, lo, hi)):
            if numeric and row.method == "cells":
                eq = 1 if row.function == "f_h" else 2
                cs = _cell_components(fmap, eq, float(c), lo, hi, pitch)
                row.numeric = cs.d
                row.ambiguous = cs.ambiguous
                row.exits_box = [cc["exits_box"] for cc in cs.components]
            rows.append(row)
    return CensusResult(L, h, np.stack([lo, hi], 1).tolist(), pitch, rows)


def chart_points(row: CensusRow, L, h, samples: int = 200, rng: np.random.Generator | None = None) -> np.ndarray:
    """Points on the charts of one census row (for residual checks)."""
    rng = rng or np.random.default_rng(0)
    L, h = float(L), _frac(h)
    g = g_poly(h).to_floats()
    gz = lambda z: np.polyval(g[::-1], z)
    c = float(row.c)
    out = []
    for a, b in row.z_pieces:
        if a == b:  # a plane z = a
            x, y = rng.uniform(-3, 3, samples), rng.uniform(-3, 3, samples)
            out.append(np.stack([x, y, np.full(samples, a)], 1))
            continue
        a_, b_ = max(a, -4.0), min(b, 4.0)
        z = a_ + (b_ - a_) * rng.uniform(0.02, 0.98, samples)
        if row.function == "f3":
            x = rng.uniform(-3, 3, samples)
            y = Einv(c / (1 - z**2))
        elif c == 0:
            x = Ainv(-gz(z), L)
            y = rng.uniform(-3, 3, samples)
        else:
            # choose A(x) on the admissible side of -g(z)
            s = np.sign(c)
            lo_v = np.where(s > 0, np.maximum(-gz(z), -L), -L)
            hi_v = np.where(s > 0, L, np.minimum(-gz(z), L))
            v = lo_v + (hi_v - lo_v) * rng.uniform(0.1, 0.9, samples)
            x = Ainv(v, L)
            y = Einv(c / (v + gz(z)))
        out.append(np.stack([x, y, z], 1))
    return np.vstack(out) if out else np.zeros((0, 3))


# ---------------------------------------------------------------------------
# connectedness of fiber pieces (three variables)


def _branch_intervals(c3: Fraction) -> list[str]:
    return ["I2"] if c3 > 0 else ["I1", "I3"]


def exact_corollary_route(params: ExampleFamilyParams, i: int, c_h, c3) -> dict:
    """Connectedness of f_h^{-1}(c_h) on each branch of f3^{-1}(c3) for the
    example family, where h is the parameter of the remaining f_h.

    With c3 != 0 the fiber on a branch is the graph over the z-set
    {|k_alpha(z)| < L}, alpha = c_h / c3. With c3 = 0 the branches are the
    planes z = +-1 and the fiber on each is the graph of a monotone
    function of x, hence connected or empty.
    """
    if i not in (1, 2):
        return {"applicable": False, "reason": "exact route covers the slots of f_h1 and f_h2"}
    h = params.h2 if i == 1 else params.h1
    c_h, c3 = _frac(c_h), _frac(c3)
    branches = []
    if c3 == 0:
        for z0, gz in ((1, h), (-1, -h)):
            # (A(x) + g(z0)) E(y) = c_h with g(1) = h, g(-1) = -h; A + g has a fixed sign
            nonempty = (c_h > 0) if gz > 0 else (c_h < 0)
            branches.append({"branch": f"z = {z0}", "connected": True, "empty": not nonempty,
                             "reason": "y -> c E^-1 graph over x"})
    else:
        alpha = c_h / c3
        k = k_alpha_poly(alpha, h)
        for name in _branch_intervals(c3):
            chk = preimage_interval_check(k, params.L, name)
            branches.append({
                "branch": name,
                "connected": chk.connected,
                "empty": len(chk.pieces) == 0,
                "pieces": len(chk.pieces),
                "alpha": _fstr(alpha),
                "reason": "preimage of (-L, L) under k_alpha",
            })
    return {"applicable": True, "h": _fstr(h), "branches": branches,
            "connected": all(b["connected"] for b in branches)}


def _cell_label_of(cs: ComponentSet, P: np.ndarray) -> np.ndarray:
    """Surface label (0-based, -1 if none nearby) for each point."""
    lab = cs.cell_labels
    lo = np.array(cs.box)[:, 0]
    steps = np.array([(a[-1] - a[0]) / (len(a) - 1) for a in cs.axes])
    idx = np.floor((P - lo) / steps).astype(int)
    idx = np.clip(idx, 0, np.array(lab.shape) - 1)
    out = np.full(len(P), -1)
    n = P.shape[1]
    offsets = np.stack(np.meshgrid(*[[0, -1, 1]] * n, indexing="ij"), -1).reshape(-1, n)
    for r in range(len(P)):
        for off in offsets:
            q = np.clip(idx[r] + off, 0, np.array(lab.shape) - 1)
            v = lab[tuple(q)]
            if v:
                out[r] = v - 1
                break
    return out


@dataclass
class CorollaryLevel:
    levels: list[str]
    numeric: str  # connected / disconnected / ambiguous / empty
    exact: str  # connected / disconnected / n/a
    verdict: str  # connected / disconnected / ambiguous / inconclusive
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"levels": self.levels, "numeric": self.numeric, "exact": self.exact,
                "verdict": self.verdict, "details": self.details}


@dataclass
class CorollaryResult:
    index: int
    pair: list[int]
    box: list
    pitch: float
    levels: list[CorollaryLevel]
    jacobian_sign: dict

    @property
    def verdict(self) -> str:
        vs = {lv.verdict for lv in self.levels}
        for v in ("disconnected", "inconclusive", "ambiguous"):
            if v in vs:
                return v
        return "connected"

    def to_dict(self) -> dict:
        return {"index": self.index, "pair": self.pair, "box": self.box, "pitch": self.pitch,
                "verdict": self.verdict, "jacobian_sign": self.jacobian_sign,
                "levels": [lv.to_dict() for lv in self.levels]}


def corollary_check(
    fmap: MapSpec,
    i: int,
    levels_j: Sequence = (-2, -1, 0, 1, 2),
    levels_k: Sequence = (-2, -1, 0, 1, 2),
    box=(-4.0, 4.0),
    pitch: float = 0.1,
    *,
    family: ExampleFamilyParams | None = None,
    samples: int = 2000,
    rng: np.random.Generator | None = None,
    rtol: float = 1e-9,
) -> CorollaryResult:
    """For n = 3, test that each box component of f_j^{-1}(c_j) meets
    f_k^{-1}(c_k) in one piece, and vice versa, where {j, k} are the slots
    other than i. Pieces are the orbit-joined clusters of the F_i fiber.
    """
    if fmap.n != 3:
        raise ValueError("corollary check needs a map of three variables")
    j, k = [a for a in (1, 2, 3) if a != i]
    rng = rng or np.random.default_rng(0)
    lo, hi = box_bounds(box, 3)
    P = lo + (hi - lo) * rng.random((samples, 3))
    J = JacobianExpr(fmap).det_at(P)
    jsign = {"samples": samples, "min_abs": float(np.min(np.abs(J))),
             "signs": sorted({int(s) for s in np.sign(J)})}
    if 0 in jsign["signs"] or len(jsign["signs"]) > 1:
        raise ValueError("the Jacobian determinant vanishes or changes sign in the box")
    out = []
    surf_cache: dict = {}
    for cj in levels_j:
        for ck in levels_k:
            cj_f, ck_f = _frac(cj), _frac(ck)
            cs = enumerate_components(fmap, [float(cj_f), float(ck_f)], box, pitch, drop_index=i,
                                      cross_validate=True, rtol=rtol)
            details = {"curve_clusters": cs.d, "groups": cs.d_connected,
                       "cross_validation": cs.cross_validation, "min_gap": None if math.isinf(cs.min_gap) else cs.min_gap}
            if cs.ambiguous:
                numeric = "ambiguous"
            elif cs.d == 0:
                numeric = "empty"
            else:
                groups = _groups(cs)
                numeric = "connected"
                per_surface = {}
                for eq, c in ((j, cj_f), (k, ck_f)):
                    key = (eq, c)
                    if key not in surf_cache:
                        surf_cache[key] = _cell_components(fmap, eq, float(c), lo, hi, pitch)
                    surf = surf_cache[key]
                    lab = _cell_label_of(surf, cs.points)
                    counts: dict[int, set] = {}
                    for s, gname in zip(lab, groups):
                        counts.setdefault(int(s), set()).add(int(gname))
                    per_surface[fmap.labels[eq - 1]] = {str(s): len(v) for s, v in sorted(counts.items())}
                    if any(len(v) > 1 for s, v in counts.items() if s >= 0):
                        numeric = "disconnected"
                details["pieces_per_surface_component"] = per_surface
            exact = "n/a"
            if family is not None:
                ex = _exact_for_slots(family, i, fmap, cj_f, ck_f)
                details["exact"] = ex
                if ex.get("applicable"):
                    exact = "connected" if ex["connected"] else "disconnected"
            if exact == "n/a" or numeric in ("empty",):
                verdict = numeric if numeric != "empty" else (exact if exact != "n/a" else "connected")
            elif numeric == "ambiguous":
                verdict = "ambiguous"
            elif numeric == exact:
                verdict = numeric
            else:
                verdict = "inconclusive"
            out.append(CorollaryLevel([_fstr(cj_f), _fstr(ck_f)], numeric, exact, verdict, details))
    return CorollaryResult(i, [j, k], np.stack([lo, hi], 1).tolist(), pitch, out, jsign)


def _groups(cs: ComponentSet) -> np.ndarray:
    """Group id per point after orbit joins."""
    parent = list(range(cs.d))

    def find(a):
        while parent[a] != a:
            a = parent[a]
        return a

    if cs.cross_validation:
        for a, b in cs.cross_validation["joins"]:
            parent[find(a)] = find(b)
    return np.array([find(int(a)) for a in cs.labels])


def _exact_for_slots(family: ExampleFamilyParams, i: int, fmap: MapSpec, cj: Fraction, ck: Fraction) -> dict:
    # in the example family the kept pair is (f_h, f3) whenever i is 1 or 2
    if i == 3 or fmap.labels[2] != "f3":
        return {"applicable": False, "reason": "exact route covers the slots of f_h1 and f_h2"}
    return exact_corollary_route(family, i, cj, ck)


# ---------------------------------------------------------------------------
# collisions


@dataclass
class CollisionPair:
    p: list[float]
    q: list[float]
    image: list[float]
    residual: float
    exact: bool | None = None

    def to_dict(self) -> dict:
        return {"p": self.p, "q": self.q, "image": self.image, "residual": self.residual, "exact": self.exact}


def _rationalize(v: float, max_den: int = 1000) -> Fraction:
    return Fraction(v).limit_denominator(max_den)


def _exact_collision(fmap: MapSpec, p, q) -> bool | None:
    pr = [_rationalize(v) for v in p]
    qr = [_rationalize(v) for v in q]
    if max(abs(float(a) - b) for a, b in zip(pr + qr, list(p) + list(q))) > 1e-9:
        return None
    try:
        return all(evaluate_exact(f, pr) == evaluate_exact(f, qr) for f in fmap.components)
    except (NotExactError, DomainError, ZeroDivisionError):
        return None


def collision_search(
    fmap: MapSpec,
    box,
    pitch: float = 0.1,
    *,
    neighbours: int = 16,
    max_candidates: int = 4000,
    max_pairs: int = 200,
    tol: float = 1e-9,
) -> list[CollisionPair]:
    """Pairs p != q in the box with F(p) = F(q).

    Grid images are matched by nearest neighbours in image space; source
    pairs closer than a few pitches are skipped. Each candidate is refined
    by minimum-norm Gauss-Newton on F(p) - F(q) = 0 in 2n unknowns and kept
    when |F(p) - F(q)| <= tol * max(1, |F(p)|).
    """
    n = fmap.n
    lo, hi = box_bounds(box, n)
    axes = _axes(lo, hi, pitch)
    P = np.stack([a.ravel() for a in np.meshgrid(*axes, indexing="ij")], axis=1)
    comp = compile_exprs(fmap.components, n)
    V = _safe_eval(comp, P)
    ok = np.all(np.isfinite(V), axis=1)
    P, V = P[ok], V[ok]
    h = max((a[-1] - a[0]) / (len(a) - 1) for a in axes)
    sep = 3 * h * math.sqrt(n)
    tree = cKDTree(V)
    kq = min(neighbours + 1, len(P))
    dist, nn = tree.query(V, k=kq)
    a_idx = np.repeat(np.arange(len(P)), kq)
    b_idx = nn.ravel()
    dd = dist.ravel()
    mask = (b_idx > a_idx) & (b_idx < len(P))
    a_idx, b_idx, dd = a_idx[mask], b_idx[mask], dd[mask]
    far = np.linalg.norm(P[a_idx] - P[b_idx], axis=1) > sep
    a_idx, b_idx, dd = a_idx[far], b_idx[far], dd[far]
    # image radius: what one grid step can move the image by, locally
    jac = JacobianExpr(fmap)
    order = np.lexsort((np.linalg.norm(P[a_idx], axis=1) + np.linalg.norm(P[b_idx], axis=1), dd))
    a_idx, b_idx, dd = a_idx[order], b_idx[order], dd[order]
    if len(a_idx):
        Jn = np.linalg.norm(jac.matrix_at(P[a_idx[:max_candidates]]), axis=(1, 2))
        reach = h * math.sqrt(n) * Jn
        keep = dd[: len(Jn)] <= reach
        a_idx, b_idx = a_idx[:max_candidates][keep], b_idx[:max_candidates][keep]
    pairs: list[CollisionPair] = []
    seen = set()
    if not len(a_idx):
        return pairs
    X = np.hstack([P[a_idx], P[b_idx]])
    for _ in range(40):
        p, q = X[:, :n], X[:, n:]
        r = _safe_eval(comp, p) - _safe_eval(comp, q)
        Jp, Jq = jac.matrix_at(p), jac.matrix_at(q)
        Jpq = np.concatenate([Jp, -Jq], axis=2)
        step = _min_norm_step(Jpq, r)
        step[~np.isfinite(step)] = 0.0
        X = X - step
        if np.max(np.abs(step)) < 1e-15:
            break
    p, q = X[:, :n], X[:, n:]
    Fp, Fq = _safe_eval(comp, p), _safe_eval(comp, q)
    res = np.linalg.norm(Fp - Fq, axis=1)
    scale = np.maximum(1.0, np.linalg.norm(Fp, axis=1))
    good = np.isfinite(res) & (res <= tol * scale) & (np.linalg.norm(p - q, axis=1) > sep / 2)
    span = hi - lo
    inbox = lambda Z: np.all((Z >= lo - 1e-9 * span) & (Z <= hi + 1e-9 * span), axis=1)
    good &= inbox(p) & inbox(q)
    good_idx = np.nonzero(good)[0]
    src = np.linalg.norm(p, axis=1) + np.linalg.norm(q, axis=1)
    good_idx = good_idx[np.lexsort((src[good_idx], res[good_idx]))]
    for r_ in good_idx:
        a, b = p[r_], q[r_]
        if tuple(b) < tuple(a):
            a, b = b, a
        key = tuple(np.round(np.concatenate([a, b]), 6))
        if key in seen:
            continue
        seen.add(key)
        pairs.append(CollisionPair(a.tolist(), b.tolist(), Fp[r_].tolist(), float(res[r_]),
                                   _exact_collision(fmap, a, b)))
        if len(pairs) >= max_pairs:
            break
    return pairs


# ---------------------------------------------------------------------------
# non-properness sampling


@dataclass
class JelonekSample:
    candidates: list[dict]
    clusters: list[dict]
    settings: dict

    @property
    def empty(self) -> bool:
        return not self.candidates

    def to_dict(self) -> dict:
        return {"candidates": self.candidates, "clusters": self.clusters, "settings": self.settings}


def ray_directions(n: int, count: int) -> np.ndarray:
    """Unit directions: equally spaced angles in the plane, a Fibonacci
    sphere plus the coordinate axes in three or more dimensions."""
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        th = 2 * np.pi * np.arange(count) / count
        D = np.stack([np.cos(th), np.sin(th)], 1)
        D[np.abs(D) < 1e-15] = 0.0
        return D
    k = np.arange(count) + 0.5
    phi = np.arccos(1 - 2 * k / count)
    th = np.pi * (1 + 5**0.5) * k
    D = np.zeros((count, n))
    D[:, 0] = np.cos(th) * np.sin(phi)
    D[:, 1] = np.sin(th) * np.sin(phi)
    D[:, 2] = np.cos(phi)
    D /= np.linalg.norm(D, axis=1, keepdims=True)
    axes_ = np.vstack([np.eye(n), -np.eye(n)])
    return np.vstack([D, axes_])


def jelonek_probe(
    fmap: MapSpec,
    rays: int = 256,
    radius: float = 1e3,
    *,
    image_bound: float = 1e2,
    base_box=(-2.0, 2.0),
    bases_per_axis: int = 5,
    radii: int = 40,
    drift_tol: float = 1e-3,
    cluster_radius: float = 1e-2,
) -> JelonekSample:
    """Follow F along rays b + r u (r on a geometric ladder up to ``radius``)
    and record limits of bounded image sequences.

    A ray contributes a candidate when its image stays within
    ``image_bound`` at the two largest radii and moves by at most
    ``drift_tol`` between them.
    """
    n = fmap.n
    if radius <= 1:
        raise ValueError("radius must exceed 1")
    comp = compile_exprs(fmap.components, n)
    lo, hi = box_bounds(base_box, n)
    grids = [np.linspace(a, b, bases_per_axis) for a, b in zip(lo, hi)]
    B = np.stack([g.ravel() for g in np.meshgrid(*grids, indexing="ij")], 1)
    D = ray_directions(n, rays)
    R = np.geomspace(1.0, radius, radii)
    cands = []
    for b in B:
        pts = b[None, None, :] + R[None, :, None] * D[:, None, :]  # (dirs, radii, n)
        vals = _safe_eval(comp, pts.reshape(-1, n)).reshape(len(D), len(R), n)
        last, prev = vals[:, -1], vals[:, -2]
        with np.errstate(over="ignore", invalid="ignore"):
            norm_last = np.linalg.norm(last, axis=1)
            drift = np.linalg.norm(last - prev, axis=1)
            ok = np.isfinite(norm_last) & (norm_last <= image_bound) & (drift <= drift_tol * (1 + norm_last))
        for d in np.nonzero(ok)[0]:
            cands.append({
                "limit": last[d].tolist(),
                "base": b.tolist(),
                "direction": D[d].tolist(),
                "source_norm": float(np.linalg.norm(pts[d, -1])),
                "drift": float(drift[d]),
            })
    clusters = []
    if cands:
        Y = np.array([c["limit"] for c in cands])
        nc, lab = _cluster(Y, cluster_radius)
        for a in range(nc):
            Q = Y[lab == a]
            clusters.append({"center": Q.mean(axis=0).tolist(), "size": int(len(Q)),
                             "bbox": np.stack([Q.min(0), Q.max(0)], 1).tolist()})
        clusters.sort(key=lambda c: c["center"])
    settings = {"rays": int(len(D)), "radius": radius, "radii": radii, "image_bound": image_bound,
                "drift_tol": drift_tol, "bases": int(len(B)), "cluster_radius": cluster_radius}
    return JelonekSample(cands, clusters, settings)


# ---------------------------------------------------------------------------
# component counts


@dataclass
class CountResult:
    drop_index: int | None
    per_level: list[dict]

    @property
    def verdict(self) -> str:
        if any(r["ambiguous"] for r in self.per_level):
            return "inconclusive"
        if all(r["d"] == 1 for r in self.per_level):
            return "consistent with injectivity"
        return "witness found"

    def to_dict(self) -> dict:
        return {"drop_index": self.drop_index, "verdict": self.verdict, "per_level": self.per_level}


def component_count_check(
    fmap: MapSpec,
    levels: Sequence[Sequence[float]],
    box,
    pitch: float = 0.1,
    *,
    drop_index: int | None = None,
    cross_validate: bool = True,
) -> CountResult:
    """Number of fiber components d at each level; injectivity requires
    d = 1 everywhere on the image. For F_i fibers, box components joined by
    a traced orbit count once."""
    rows = []
    for lv in levels:
        cs = enumerate_components(fmap, lv, box, pitch, drop_index=drop_index,
                                  cross_validate=cross_validate and drop_index is not None)
        d = cs.d_connected
        rows.append({
            "level": [float(v) for v in lv],
            "d": int(d),
            "box_components": cs.d,
            "ambiguous": cs.ambiguous,
            "representatives": [c["representative"] for c in cs.components],
        })
    return CountResult(drop_index, rows)
