"""Jacobian matrices and the cofactor vector fields of a map.

For F = (f_1, ..., f_n) the operator g -> J(f_1, ..., g, ..., f_n) (g in
slot i) is the derivation sum_k c_k d/dx_k whose coefficients c_k are the
(i, k) cofactors of the Jacobian matrix. It kills every f_j with j != i
and sends f_i to J(F).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .scalar_expr import (
    CompiledExprs,
    Expr,
    MapSpec,
    ZERO,
    add,
    compile_exprs,
    diff,
    mul,
    neg,
    sub,
)

MAX_DIM = 6


def _det(entries, rows: tuple[int, ...], cols: tuple[int, ...], memo: dict) -> Expr:
    key = (rows, cols)
    if key in memo:
        return memo[key]
    if len(rows) == 1:
        out = entries[rows[0]][cols[0]]
    else:
        # expand along the row of the sub-block with the smallest entries
        r = min(rows, key=lambda rr: sum(entries[rr][c].size for c in cols))
        rest = tuple(x for x in rows if x != r)
        out = ZERO
        for pos, c in enumerate(cols):
            a = entries[r][c]
            if a.is_const and a.data == 0:
                continue
            minor = _det(entries, rest, tuple(x for x in cols if x != c), memo)
            term = mul(a, minor)
            sign = (rows.index(r) + pos) % 2
            out = sub(out, term) if sign else add(out, term)
    memo[key] = out
    return out


class JacobianExpr:
    """Symbolic Jacobian matrix with a lazily expanded determinant."""

    def __init__(self, fmap: MapSpec):
        n = fmap.n
        if n > MAX_DIM:
            raise ValueError(f"dimension {n} exceeds the cap of {MAX_DIM}")
        self.map = fmap
        self.n = n
        entries = []
        for f in fmap.components:
            memos = [dict() for _ in range(n)]
            entries.append(tuple(diff(f, c + 1, memos[c]) for c in range(n)))
        self.entries: tuple[tuple[Expr, ...], ...] = tuple(entries)
        self._memo: dict = {}

    def entry(self, r: int, c: int) -> Expr:
        """d f_r / d x_c, 1-based."""
        return self.entries[r - 1][c - 1]

    def minor(self, r: int, c: int) -> Expr:
        rows = tuple(x for x in range(self.n) if x != r - 1)
        cols = tuple(x for x in range(self.n) if x != c - 1)
        if not rows:
            from .scalar_expr import ONE

            return ONE
        return _det(self.entries, rows, cols, self._memo)

    def cofactor(self, r: int, c: int) -> Expr:
        m = self.minor(r, c)
        return neg(m) if (r + c) % 2 else m

    @cached_property
    def determinant(self) -> Expr:
        idx = tuple(range(self.n))
        return _det(self.entries, idx, idx, self._memo)

    @cached_property
    def _compiled_entries(self) -> CompiledExprs:
        flat = [e for row in self.entries for e in row]
        return compile_exprs(flat, self.n)

    @cached_property
    def _compiled_det(self) -> CompiledExprs:
        return compile_exprs([self.determinant], self.n)

    def matrix_at(self, points: np.ndarray) -> np.ndarray:
        """Numeric Jacobian matrices, shape (m, n, n)."""
        vals = self._compiled_entries.at_points(points)
        return vals.reshape(-1, self.n, self.n)

    def det_at(self, points: np.ndarray) -> np.ndarray:
        return self._compiled_det.at_points(points)[:, 0]

    def lu_det_at(self, points: np.ndarray) -> np.ndarray:
        """Determinant via LU of the numeric matrices (independent check)."""
        return np.linalg.det(self.matrix_at(points))


def jacobian(fmap: MapSpec) -> JacobianExpr:
    return JacobianExpr(fmap)


@dataclass
class VectorField:
    """sum_k components[k] d/dx_{k+1}; ``index`` is the slot i it came from."""

    index: int
    components: tuple[Expr, ...]
    source: MapSpec | None = None
    jac: JacobianExpr | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.components)

    def apply(self, g: Expr) -> Expr:
        """The derivation applied to g, symbolically."""
        out = ZERO
        for k, c in enumerate(self.components, start=1):
            out = add(out, mul(c, diff(g, k)))
        return out

    @cached_property
    def compiled(self) -> CompiledExprs:
        return compile_exprs(self.components, self.n)

    @cached_property
    def compiled_scalar(self) -> CompiledExprs:
        return compile_exprs(self.components, self.n, backend="math")

    def at_points(self, points: np.ndarray) -> np.ndarray:
        return self.compiled.at_points(points)

    def __call__(self, point) -> np.ndarray:
        return np.array(self.compiled_scalar(*[float(v) for v in point]), dtype=float)


def delta_field(fmap: MapSpec, i: int, jac: JacobianExpr | None = None) -> VectorField:
    """Cofactor field of slot i: c_k = (-1)^(i+k) minor(i, k)."""
    if not 1 <= i <= fmap.n:
        raise IndexError(f"index {i} out of range 1..{fmap.n}")
    jac = jac or JacobianExpr(fmap)
    comps = tuple(jac.cofactor(i, k) for k in range(1, fmap.n + 1))
    return VectorField(i, comps, fmap, jac)


@dataclass
class IdentityReport:
    index: int
    samples: int
    passed: bool
    max_annihilation_error: float  # max |X(f_j)| / scale over j != i
    max_determinant_rel_error: float  # max |X(f_i) - J| / |J|
    first_violation: dict | None = None
    tolerances: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "samples": self.samples,
            "passed": self.passed,
            "max_annihilation_error": self.max_annihilation_error,
            "max_determinant_rel_error": self.max_determinant_rel_error,
            "first_violation": self.first_violation,
            "tolerances": self.tolerances,
        }


def sample_box(rng: np.random.Generator, box, m: int, n: int) -> np.ndarray:
    lo, hi = box_bounds(box, n)
    return lo + (hi - lo) * rng.random((m, n))


def box_bounds(box, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Accepts (a, b) for a cube or a sequence of n (a_k, b_k) pairs."""
    arr = np.asarray(box, dtype=float)
    if arr.shape == (2,):
        arr = np.tile(arr, (n, 1))
    if arr.shape != (n, 2):
        raise ValueError(f"box must be (a, b) or {n} pairs, got shape {arr.shape}")
    if np.any(arr[:, 1] <= arr[:, 0]):
        raise ValueError("degenerate box")
    return arr[:, 0], arr[:, 1]


def verify_identities(
    fmap: MapSpec,
    i: int,
    samples: int = 1000,
    *,
    rng: np.random.Generator | None = None,
    box=(-3.0, 3.0),
    abs_tol: float = 1e-9,
    rel_tol: float = 1e-9,
    field_: VectorField | None = None,
) -> IdentityReport:
    """Check X(f_j) = 0 (j != i) and X(f_i) = J(F) at random points.

    X(f_j) is formed numerically as sum_k c_k df_j/dx_k; the annihilation
    error is measured against the scale sum_k |c_k| |df_j/dx_k|.
    """
    rng = rng or np.random.default_rng(0)
    X = field_ or delta_field(fmap, i)
    jac = X.jac if X.jac is not None and X.source is fmap else JacobianExpr(fmap)
    P = sample_box(rng, box, samples, fmap.n)
    C = X.at_points(P)  # (m, n)
    G = jac.matrix_at(P)  # (m, n, n), row r = grad f_r
    J = jac.det_at(P)
    worst_ann, worst_det = 0.0, 0.0
    violation = None
    for j in range(1, fmap.n + 1):
        terms = C * G[:, j - 1, :]
        val = terms.sum(axis=1)
        if j == i:
            err = np.abs(val - J) / np.maximum(np.abs(J), np.finfo(float).tiny)
            worst_det = max(worst_det, float(err.max()))
            bad = np.nonzero(err > rel_tol)[0]
        else:
            scale = np.maximum(np.abs(terms).sum(axis=1), 1.0)
            err = np.abs(val) / scale
            worst_ann = max(worst_ann, float(err.max()))
            bad = np.nonzero(err > abs_tol)[0]
        if bad.size and violation is None:
            b = int(bad[0])
            violation = {"j": j, "point": P[b].tolist(), "value": float(val[b]), "J": float(J[b])}
    return IdentityReport(
        index=i,
        samples=samples,
        passed=violation is None,
        max_annihilation_error=worst_ann,
        max_determinant_rel_error=worst_det,
        first_violation=violation,
        tolerances={"annihilation_abs_scaled": abs_tol, "determinant_rel": rel_tol},
    )
