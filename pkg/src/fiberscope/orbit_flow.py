"""Integral curves of cofactor fields.

A batched Dormand-Prince 5(4) integrator advances many orbits at once, each
with its own step size. Orbits are traced in both time directions, by
default in arc length (field divided by its norm) so unbounded fiber
components are covered at unit speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from .field_builder import JacobianExpr, VectorField, box_bounds
from .scalar_expr import DomainError, MapSpec, compile_exprs, jvp

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_ERR = _B5 - _B4

EQUILIBRIUM_FLOOR = 1e-12
BLOWUP_FACTOR = 1e10  # |X| growth that marks an approach to a singular boundary


@dataclass
class TraceOptions:
    rtol: float = 1e-9
    atol: float = 1e-12
    arclength: bool = True
    both_directions: bool = True
    max_steps: int = 200_000
    h0: float = 1e-3
    hmax: float = math.inf
    escape_radii: tuple[float, ...] = ()
    box: object = None  # (a, b) or n pairs; entry/exit events are logged


@dataclass
class Branch:
    direction: int
    t: np.ndarray
    y: np.ndarray
    dy: np.ndarray
    reason: str
    events: list = field(default_factory=list)
    n_steps: int = 0
    n_rejected: int = 0
    h_min: float = math.inf
    h_max: float = 0.0


@dataclass
class OrbitTrace:
    seed: np.ndarray
    arclength: bool
    forward: Branch
    backward: Branch | None = None

    @property
    def branches(self) -> list[Branch]:
        return [b for b in (self.backward, self.forward) if b is not None]

    def samples(self) -> tuple[np.ndarray, np.ndarray]:
        """Signed times and states along the whole orbit, in orbit order."""
        if self.backward is None:
            return self.forward.t.copy(), self.forward.y.copy()
        tb, yb = -self.backward.t[::-1], self.backward.y[::-1]
        return np.concatenate([tb[:-1], self.forward.t]), np.vstack([yb[:-1], self.forward.y])

    @property
    def events(self) -> list[dict]:
        return [e for b in self.branches for e in b.events]

    @property
    def termination(self) -> dict:
        return {("forward" if b.direction > 0 else "backward"): b.reason for b in self.branches}

    def stats(self) -> dict:
        bs = self.branches
        return {
            "steps": sum(b.n_steps for b in bs),
            "rejected": sum(b.n_rejected for b in bs),
            "h_min": min(b.h_min for b in bs),
            "h_max": max(b.h_max for b in bs),
        }


class _FieldRHS:
    """Signed, optionally normalised field evaluated row-wise with domain
    failures turned into NaN rows."""

    def __init__(self, X: VectorField, signs: np.ndarray, normalize: bool):
        self.X = X
        self.signs = signs
        self.normalize = normalize

    def raw(self, Y: np.ndarray) -> np.ndarray:
        try:
            return self.X.at_points(Y)
        except DomainError:
            out = np.full_like(Y, np.nan)
            for r in range(Y.shape[0]):
                try:
                    out[r] = self.X.at_points(Y[r : r + 1])[0]
                except DomainError:
                    pass
            return out

    def __call__(self, Y: np.ndarray, rows: np.ndarray) -> np.ndarray:
        V = self.raw(Y)
        s = self.signs[rows][:, None]
        if not self.normalize:
            return V * s
        with np.errstate(all="ignore"):
            nrm = np.linalg.norm(V, axis=1)
            out = V / nrm[:, None] * s
        out[nrm < EQUILIBRIUM_FLOOR] = np.nan
        return out


def _hermite(y0, f0, y1, f1, h, theta):
    """Cubic Hermite interpolant on one step (theta in [0, 1])."""
    th = np.asarray(theta)[..., None]
    h00 = 2 * th**3 - 3 * th**2 + 1
    h10 = th**3 - 2 * th**2 + th
    h01 = -2 * th**3 + 3 * th**2
    h11 = th**3 - th**2
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


def _locate(g, y0, f0, y1, f1, h, th_a, th_b, iters=50):
    ga = g(_hermite(y0, f0, y1, f1, h, th_a)[None])[0]
    for _ in range(iters):
        mid = 0.5 * (th_a + th_b)
        gm = g(_hermite(y0, f0, y1, f1, h, mid)[None])[0]
        if (gm > 0) == (ga > 0):
            th_a, ga = mid, gm
        else:
            th_b = mid
    th = 0.5 * (th_a + th_b)
    return th, _hermite(y0, f0, y1, f1, h, th)


def _event_functions(opts: TraceOptions, n: int) -> list[tuple[str, Callable]]:
    evs = []
    for R in opts.escape_radii:
        evs.append((f"radius:{R:g}", lambda Y, R=R: np.linalg.norm(Y, axis=1) - R))
    if opts.box is not None:
        lo, hi = box_bounds(opts.box, n)
        c, r = (lo + hi) / 2, (hi - lo) / 2
        evs.append(("box", lambda Y: np.max(np.abs(Y - c) / r, axis=1) - 1.0))
    return evs


def integrate(
    rhs: Callable[[np.ndarray, np.ndarray], np.ndarray],
    Y0: np.ndarray,
    T: float,
    *,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    h0: float = 1e-3,
    hmax: float = math.inf,
    max_steps: int = 200_000,
    hmin: float = 1e-14,
    events: Sequence[tuple[str, Callable]] = (),
    stop: Callable | None = None,
    directions: np.ndarray | None = None,
) -> list[Branch]:
    """Integrate y' = rhs(y) for every row of Y0 over [0, T].

    ``stop(rows, Y_new, Y_old, F_new, F_old, h, t_new)`` may return a dict row -> reason to end
    rows early after an accepted step.
    """
    Y = np.array(Y0, dtype=float, copy=True)
    m, n = Y.shape
    dirs = np.ones(m, dtype=int) if directions is None else np.asarray(directions)
    all_rows = np.arange(m)
    F = rhs(Y, all_rows)
    t = np.zeros(m)
    h = np.full(m, float(min(h0, T)))
    active = np.ones(m, dtype=bool)
    reasons = [""] * m
    hist_t = [[0.0] for _ in range(m)]
    hist_y = [[Y[r].copy()] for r in range(m)]
    hist_f = [[F[r].copy()] for r in range(m)]
    ev_log = [[] for _ in range(m)]
    n_acc = np.zeros(m, dtype=int)
    n_rej = np.zeros(m, dtype=int)
    h_lo = np.full(m, math.inf)
    h_hi = np.zeros(m)
    bad0 = ~np.all(np.isfinite(F), axis=1)
    for r in np.nonzero(bad0)[0]:
        active[r] = False
        reasons[r] = "degenerate_start"

    while active.any():
        idx = np.nonzero(active)[0]
        hh = np.minimum(np.minimum(h[idx], T - t[idx]), hmax)
        y0 = Y[idx]
        K = [F[idx]]
        for s in range(1, 7):
            acc = np.zeros_like(y0)
            for j, a in enumerate(_A[s]):
                if a:
                    acc += a * K[j]
            K.append(rhs(y0 + hh[:, None] * acc, idx))
        Ks = np.stack(K)  # (7, k, n)
        y5 = y0 + hh[:, None] * np.tensordot(_B5, Ks, axes=1)
        err = hh[:, None] * np.tensordot(_ERR, Ks, axes=1)
        scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y5))
        with np.errstate(all="ignore"):
            en = np.sqrt(np.mean((err / scale) ** 2, axis=1))
        finite = np.isfinite(en) & np.all(np.isfinite(y5), axis=1)
        ok = finite & (en <= 1.0)
        with np.errstate(divide="ignore"):
            fac = np.where(en > 0, 0.9 * en ** (-0.2), 5.0)
        fac = np.clip(fac, 0.2, 5.0)
        fac = np.where(finite, fac, 0.25)
        fac = np.where(ok, fac, np.minimum(fac, 1.0))

        acc_rows = idx[ok]
        if acc_rows.size:
            yk = y5[ok]
            fk = Ks[6][ok]
            hk = hh[ok]
            y_old, f_old = Y[acc_rows].copy(), F[acc_rows].copy()
            t[acc_rows] += hk
            Y[acc_rows] = yk
            F[acc_rows] = fk
            n_acc[acc_rows] += 1
            h_lo[acc_rows] = np.minimum(h_lo[acc_rows], hk)
            h_hi[acc_rows] = np.maximum(h_hi[acc_rows], hk)
            for q, r in enumerate(acc_rows):
                hist_t[r].append(t[r])
                hist_y[r].append(yk[q].copy())
                hist_f[r].append(fk[q].copy())
            for name, g in events:
                g_old, g_new = g(y_old), g(yk)
                thetas = np.array([0.25, 0.5, 0.75])
                for q, r in enumerate(acc_rows):
                    mids = g(_hermite(y_old[q], f_old[q], yk[q], fk[q], hk[q], thetas))
                    vals = np.concatenate([[g_old[q]], mids, [g_new[q]]])
                    ths = np.concatenate([[0.0], thetas, [1.0]])
                    for a in range(4):
                        if (vals[a] > 0) != (vals[a + 1] > 0):
                            th, pt = _locate(g, y_old[q], f_old[q], yk[q], fk[q], hk[q], ths[a], ths[a + 1])
                            ev_log[r].append({
                                "kind": name,
                                "direction": "out" if vals[a + 1] > 0 else "in",
                                "t": float(dirs[r] * (t[r] - hk[q] + th * hk[q])),
                                "point": pt.tolist(),
                            })
            if stop is not None:
                for r, why in stop(acc_rows, yk, y_old, fk, f_old, hk, t[acc_rows]).items():
                    active[r] = False
                    reasons[r] = why
        n_rej[idx[~ok]] += 1
        h[idx] = hh * fac
        for r in idx:
            if not active[r]:
                continue
            if t[r] >= T * (1 - 1e-14):
                active[r], reasons[r] = False, "horizon"
            elif h[r] < hmin * max(1.0, abs(t[r])):
                active[r], reasons[r] = False, "step_underflow"
            elif n_acc[r] + n_rej[r] >= max_steps:
                active[r], reasons[r] = False, "budget"

    out = []
    for r in range(m):
        out.append(Branch(
            direction=int(dirs[r]),
            t=np.array(hist_t[r]),
            y=np.array(hist_y[r]),
            dy=np.array(hist_f[r]),
            reason=reasons[r],
            events=ev_log[r],
            n_steps=int(n_acc[r]),
            n_rejected=int(n_rej[r]),
            h_min=float(h_lo[r]),
            h_max=float(h_hi[r]),
        ))
    return out


def _diagnose(X: VectorField, branch: Branch) -> None:
    """Rename a step underflow after its likely cause."""
    if branch.reason not in ("step_underflow", "degenerate_start"):
        return
    y = branch.y[-1]
    try:
        v = X.at_points(y[None])[0]
    except DomainError:
        branch.reason = "domain_error"
        return
    speed = np.linalg.norm(v)
    if speed < EQUILIBRIUM_FLOOR:
        branch.reason = "equilibrium"
        return
    # the rejected steps may have left the domain just ahead of the last point
    ahead = y + np.outer(np.geomspace(1e-12, 1e-4, 9) * (1.0 + np.linalg.norm(y)), branch.dy[-1])
    try:
        X.at_points(ahead)
    except DomainError:
        branch.reason = "domain_error"
        return
    if not np.isfinite(speed) or speed > BLOWUP_FACTOR * max(1.0, np.linalg.norm(branch.dy[0])):
        branch.reason = "field_blowup"


def trace_many(
    X: VectorField,
    seeds: np.ndarray,
    horizon: float,
    opts: TraceOptions | None = None,
    stop: Callable | None = None,
) -> list[OrbitTrace]:
    opts = opts or TraceOptions()
    S = np.atleast_2d(np.asarray(seeds, dtype=float))
    m, n = S.shape
    if n != X.n:
        raise ValueError(f"seeds live in R^{n}, field in R^{X.n}")
    if not np.all(np.isfinite(S)):
        raise ValueError("seeds must be finite")
    if opts.both_directions:
        Y0 = np.vstack([S, S])
        signs = np.concatenate([np.ones(m), -np.ones(m)])
    else:
        Y0, signs = S, np.ones(m)
    rhs = _FieldRHS(X, signs, opts.arclength)
    branches = integrate(
        rhs, Y0, horizon,
        rtol=opts.rtol, atol=opts.atol, h0=opts.h0, hmax=opts.hmax,
        max_steps=opts.max_steps, events=_event_functions(opts, n),
        stop=stop, directions=signs.astype(int),
    )
    for b in branches:
        _diagnose(X, b)
    out = []
    for k in range(m):
        back = branches[m + k] if opts.both_directions else None
        out.append(OrbitTrace(S[k].copy(), opts.arclength, branches[k], back))
    return out


def trace(X: VectorField, seed: Sequence[float], horizon: float, opts: TraceOptions | None = None) -> OrbitTrace:
    """Integral curve of X through ``seed`` for |t| <= horizon (arc length by
    default)."""
    return trace_many(X, np.asarray(seed, dtype=float)[None], horizon, opts)[0]


# ---------------------------------------------------------------------------
# monitors


def conservation_check(tr: OrbitTrace, fmap: MapSpec, i: int) -> dict:
    """Max |f_j(gamma(t)) - f_j(seed)| over the samples, for every j != i."""
    comp = compile_exprs(fmap.components, fmap.n)
    _, Y = tr.samples()
    vals = comp.at_points(Y)
    ref = comp.at_points(tr.seed[None])[0]
    drift = np.max(np.abs(vals - ref), axis=0)
    per = {fmap.labels[j]: float(drift[j]) for j in range(fmap.n) if j != i - 1}
    return {"max_drift": max(per.values(), default=0.0), "per_component": per}


@dataclass
class MonotonicityVerdict:
    ok: bool
    sign: int
    max_rel_error: float
    samples: int
    violation: dict | None = None


def monotonicity_check(
    tr: OrbitTrace,
    fmap: MapSpec,
    i: int,
    rel_tol: float = 1e-6,
    jac: JacobianExpr | None = None,
    X: VectorField | None = None,
) -> MonotonicityVerdict:
    """Along the orbit, d/dt f_i(gamma(t)) must equal J(F) (divided by |X|
    in arc length) and keep one sign.

    The derivative comes from forward-mode differentiation of f_i along the
    recorded velocities; J(F) from the expanded determinant.
    """
    jac = jac or JacobianExpr(fmap)
    worst, sign, violation, count = 0.0, 0, None, 0
    for b in tr.branches:
        dfdt = jvp(fmap[i], b.y, b.dy)[1]
        J = jac.det_at(b.y)
        if tr.arclength:
            if X is None:
                raise ValueError("arc-length traces need the field to rescale J")
            J = J / np.linalg.norm(X.at_points(b.y), axis=1)
        expected = b.direction * J
        rel = np.abs(dfdt - expected) / np.maximum(np.abs(expected), np.finfo(float).tiny)
        forward_sign = np.sign(dfdt * b.direction)
        count += len(rel)
        worst = max(worst, float(rel.max()))
        signs = set(forward_sign.astype(int).tolist())
        if sign == 0 and signs:
            sign = next(iter(signs))
        bad = np.nonzero((rel > rel_tol) | (forward_sign != sign))[0]
        if bad.size and violation is None:
            k = int(bad[0])
            violation = {"point": b.y[k].tolist(), "dfdt": float(dfdt[k]), "expected": float(expected[k])}
    return MonotonicityVerdict(violation is None, sign, worst, count, violation)


# ---------------------------------------------------------------------------
# surjectivity probe


@dataclass
class SurjectivityWitness:
    box: list
    ladder: list[float]
    budget: float
    seeds: np.ndarray
    trapped: list[dict] = field(default_factory=list)
    segments: dict = field(default_factory=dict)  # rung -> list of excursions
    per_seed: list[dict] = field(default_factory=list)

    @property
    def found(self) -> bool:
        return bool(self.trapped) or any(self.segments.values())

    @property
    def verdict(self) -> str:
        return "witness found" if self.found else "no witness at scale"

    def to_dict(self) -> dict:
        return {
            "box": self.box,
            "ladder": self.ladder,
            "budget": self.budget,
            "verdict": self.verdict,
            "trapped": self.trapped,
            "segments": {f"{k:g}": v for k, v in self.segments.items()},
            "per_seed": self.per_seed,
        }


def halton_seeds(box, count: int, n: int) -> np.ndarray:
    """Deterministic low-discrepancy points inside the box (the all-zero
    first Halton point is skipped)."""
    lo, hi = box_bounds(box, n)
    u = qmc.Halton(d=n, scramble=False).random(count + 1)[1:]
    return lo + (hi - lo) * u


def _seg_dist(p, a, b) -> np.ndarray:
    ab = b - a
    L2 = np.sum(ab * ab, axis=1)
    with np.errstate(all="ignore"):
        s = np.clip(np.where(L2 > 0, np.sum((p - a) * ab, axis=1) / L2, 0.0), 0.0, 1.0)
    return np.linalg.norm(a + s[:, None] * ab - p, axis=1)


def _closest_on_step(y0, f0, y1, f1, h, p, grid=17, iters=40) -> float:
    """Distance from p to the dense-output curve of one step."""
    th = np.linspace(0.0, 1.0, grid)
    d = np.linalg.norm(_hermite(y0, f0, y1, f1, h, th) - p, axis=1)
    k = int(np.argmin(d))
    a, b = th[max(k - 1, 0)], th[min(k + 1, grid - 1)]
    dist = lambda s: float(np.linalg.norm(_hermite(y0, f0, y1, f1, h, s) - p))
    for _ in range(iters):  # ternary search; unimodal near the minimum
        m1, m2 = a + (b - a) / 3, b - (b - a) / 3
        if dist(m1) < dist(m2):
            b = m2
        else:
            a = m1
    return min(dist(0.5 * (a + b)), float(d[k]))


def escape_return_probe(
    X: VectorField,
    box,
    ladder: Sequence[float] = (5.0, 10.0, 20.0),
    seeds: int | np.ndarray = 32,
    budget: float = 1e3,
    opts: TraceOptions | None = None,
    closure_tol: float = 1e-5,
) -> SurjectivityWitness:
    """Search for orbits trapped in the box or leaving it, passing beyond a
    rung of the ladder, and coming back.

    Finding nothing only means nothing was found at this scale.
    """
    n = X.n
    lo, hi = box_bounds(box, n)
    ladder = [float(r) for r in ladder]
    if any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("ladder must be strictly increasing")
    reach = float(np.max(np.linalg.norm(np.stack(np.meshgrid(*zip(lo, hi))).reshape(n, -1).T, axis=1)))
    if ladder and ladder[0] <= reach:
        raise ValueError(f"rungs must enclose the box (box radius {reach:g})")
    S = seeds if isinstance(seeds, np.ndarray) else halton_seeds(box, int(seeds), n)
    S = np.atleast_2d(S)
    m = S.shape[0]
    seed_rows = np.vstack([S, S])
    opts = opts or TraceOptions()
    opts = TraceOptions(**{**opts.__dict__, "arclength": True, "both_directions": True})
    seed_scale = 1 + np.linalg.norm(seed_rows, axis=1)
    left = np.zeros(2 * m, dtype=bool)  # has moved well away from its seed

    def stop(rows, Ynew, Yold, Fnew, Fold, hk, tnew):
        out = {}
        rad = np.linalg.norm(Ynew, axis=1)
        far = rad - reach > (budget - tnew) + 1e-9
        tol = closure_tol * seed_scale[rows]
        close = left[rows] & (_seg_dist(seed_rows[rows], Yold, Ynew) < hk)
        for q in np.nonzero(close)[0]:
            close[q] = _closest_on_step(Yold[q], Fold[q], Ynew[q], Fnew[q], hk[q], seed_rows[rows[q]]) < tol[q]
        left[rows] |= np.linalg.norm(Ynew - seed_rows[rows], axis=1) > 1e3 * closure_tol * seed_scale[rows]
        for q, r in enumerate(rows):
            if far[q]:
                out[r] = "beyond_return"
            elif close[q]:
                out[r] = "closed"
        return out

    traces = trace_many(X, S, budget, opts, stop=stop)
    res = SurjectivityWitness(box=np.stack([lo, hi], axis=1).tolist(), ladder=ladder, budget=budget, seeds=S)
    res.segments = {r: [] for r in ladder}
    for k, tr in enumerate(traces):
        t, Y = tr.samples()
        inside = np.all((Y >= lo - 1e-12) & (Y <= hi + 1e-12), axis=1)
        rad = np.linalg.norm(Y, axis=1)
        reasons = tr.termination
        res.per_seed.append({
            "seed_index": k,
            "seed": tr.seed.tolist(),
            "max_radius": float(rad.max()),
            "termination": reasons,
        })
        finished = all(v in ("horizon", "closed", "equilibrium") for v in reasons.values())
        if inside.all() and finished:
            res.trapped.append({
                "seed_index": k,
                "seed": tr.seed.tolist(),
                "closed_orbit": "closed" in reasons.values(),
                "equilibrium": "equilibrium" in reasons.values(),
                "max_radius": float(rad.max()),
            })
        in_idx = np.nonzero(inside)[0]
        for a, b in zip(in_idx, in_idx[1:]):
            if b - a < 2:
                continue
            j = a + 1 + int(np.argmax(rad[a + 1 : b]))
            seg = {
                "seed_index": k,
                "start": Y[a].tolist(),
                "end": Y[b].tolist(),
                "t_start": float(t[a]),
                "t_end": float(t[b]),
                "max_radius": float(rad[j]),
                "farthest_point": Y[j].tolist(),
            }
            for R in ladder:
                if rad[j] > R:
                    res.segments[R].append(seg)
    return res
