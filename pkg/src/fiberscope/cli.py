"""Command-line front end.

Exit codes: 0 when every check completed without a falsifying witness,
2 when some check produced one, 1 on usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import fiber_atlas as fa
from . import orbit_flow as of
from .field_builder import JacobianExpr, delta_field, verify_identities
from .poly_real import (
    NAMED_INTERVALS,
    UniPoly,
    certify_sign,
    count_roots,
    isolate_roots,
    sturm_chain,
)
from .presets import PRESET_NAMES, ExampleFamilyParams, example_family, get_preset, k_alpha_poly, m_poly
from .report import REPORT_SCHEMA, CheckRecord, RunReport, dumps, emit_report, map_fingerprint, trace_table, write_csv
from .scalar_expr import (
    DomainError,
    ExprSyntaxError,
    MapSpec,
    NotExactError,
    evaluate,
    evaluate_exact,
    parse_map,
    to_text,
)

EXIT_OK, EXIT_USAGE, EXIT_WITNESS = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# argument helpers


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _rationals(text: str) -> list[Fraction]:
    try:
        return [Fraction(v.strip()) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated rationals, got {text!r}")


def _rational(text: str) -> Fraction:
    try:
        return Fraction(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a rational number, got {text!r}")


def _box(text: str) -> list[list[float]]:
    """"a,b" for a cube or "a1,b1;a2,b2;..." per axis."""
    parts = [p for p in text.split(";") if p.strip()]
    out = []
    for p in parts:
        v = _floats(p)
        if len(v) != 2 or not v[0] < v[1]:
            raise argparse.ArgumentTypeError(f"box bounds must be 'a,b' with a < b, got {p!r}")
        out.append(v)
    return out


def _grid(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", text)
    if not m or int(m.group(1)) < 1 or int(m.group(2)) < 1:
        raise argparse.ArgumentTypeError(f"grid must look like 5x5, got {text!r}")
    return int(m.group(1)), int(m.group(2))


def _levels(text: str) -> list[list[float]]:
    return [_floats(p) for p in text.split(";") if p.strip()]


_NEG_VALUE = re.compile(r"^-[\d.]")


def preprocess_argv(argv: Sequence[str]) -> list[str]:
    """Glue option values that start with a minus sign (``--box -3,3``) to
    their option so argparse does not read them as flags."""
    out: list[str] = []
    it = list(argv)
    k = 0
    while k < len(it):
        tok = it[k]
        if tok.startswith("--") and "=" not in tok and k + 1 < len(it) and _NEG_VALUE.match(it[k + 1]):
            out.append(f"{tok}={it[k + 1]}")
            k += 2
            continue
        out.append(tok)
        k += 1
    return out


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("map selection")
    src = g.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=PRESET_NAMES, help="built-in map (default: example)")
    src.add_argument("--map", metavar="FILE", help="map file with lines fK = expr")
    g.add_argument("--L", type=_rational, default=Fraction(1))
    g.add_argument("--h1", type=_rational, default=Fraction(2))
    g.add_argument("--h2", type=_rational, default=Fraction(3))
    o = p.add_argument_group("output and numerics")
    o.add_argument("--out", metavar="PATH", help="write the JSON report here")
    o.add_argument("--json", action="store_true", help="print the JSON report to stdout")
    o.add_argument("--csv", metavar="PATH", help="write the plot-ready table here")
    o.add_argument("--rng-seed", type=int, default=0)
    o.add_argument("--tol-rel", type=float, default=1e-9)
    o.add_argument("--tol-abs", type=float, default=1e-12)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fiberscope", description="Cofactor fields, fibers and injectivity probes for maps R^n -> R^n.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    common = _common()

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_, description=help_)

    p = add("jac", "symbolic Jacobian determinant; exact value at a point")
    p.add_argument("--at", type=_rationals, help="point for exact evaluation, e.g. 0,0,0")
    p.add_argument("--samples", type=int, default=500, help="points for the closed-form comparison")
    p.add_argument("--box", type=_box, default=[[-3.0, 3.0]])

    p = add("delta", "cofactor field of slot i and its operator identities")
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--verify", type=int, default=1000, metavar="N", help="random points for the identity check")
    p.add_argument("--box", type=_box, default=[[-3.0, 3.0]])

    p = add("trace", "integral curve of a cofactor field")
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--seed", type=_floats, required=True, metavar="A,B,C")
    p.add_argument("--arclen", type=float, default=10.0, help="arc length (or time with --raw) per direction")
    p.add_argument("--raw", action="store_true", help="integrate the field itself, not its unit direction")
    p.add_argument("--forward-only", action="store_true")

    p = add("probe-surjectivity", "escape/return and trapped-orbit search")
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--box", type=_box, default=[[-2.0, 2.0]])
    p.add_argument("--ladder", type=_floats, default=[5.0, 10.0, 20.0])
    p.add_argument("--seeds", type=int, default=32)
    p.add_argument("--budget", type=float, default=1e3)

    p = add("census", "component counts of the fibers f_h = c and f3 = c")
    p.add_argument("--c", type=_rationals, default=[Fraction(-1), Fraction(0), Fraction(1)])
    p.add_argument("--box", type=_box, default=[[-6.0, 6.0]])
    p.add_argument("--pitch", type=float, default=0.1)

    p = add("corollary", "connectedness of fiber pieces on a grid of level pairs")
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--grid", type=_grid, default=(5, 5))
    p.add_argument("--levels-j", type=_rationals)
    p.add_argument("--levels-k", type=_rationals)
    p.add_argument("--box", type=_box, default=[[-4.0, 4.0]])
    p.add_argument("--pitch", type=float, default=0.1)

    p = add("collisions", "pairs p != q with F(p) = F(q)")
    p.add_argument("--box", type=_box, default=[[-3.0, 3.0]])
    p.add_argument("--pitch", type=float, default=0.1)
    p.add_argument("--max-pairs", type=int, default=200)

    p = add("jelonek", "sample limits of F along escaping rays")
    p.add_argument("--rays", type=int, default=256)
    p.add_argument("--radius", type=float, default=1e3)
    p.add_argument("--image-bound", type=float, default=1e2)
    p.add_argument("--drift-tol", type=float, default=1e-3)
    p.add_argument("--bases", type=int, default=5, help="base points per axis")

    p = add("count", "number of fiber components per level")
    p.add_argument("--drop", type=int, help="count components of F_i fibers (drop slot i)")
    p.add_argument("--levels", type=_levels, help="levels 'a,b;c,d'; default: images of sampled points")
    p.add_argument("--sample-levels", type=int, default=25)
    p.add_argument("--box", type=_box, default=[[-3.0, 3.0]])
    p.add_argument("--pitch", type=float, default=0.1)

    p = add("sturm", "exact root count and sign certificate of a polynomial")
    p.add_argument("--poly", help="polynomial in z; default: m(z)")
    p.add_argument("--k-alpha", type=_rational, metavar="ALPHA", help="use k_alpha with --h")
    p.add_argument("--h", type=_rational, default=Fraction(2))
    p.add_argument("--interval", default="R", help="I1, I2, I3, R or 'a,b' (open)")

    add("report-schema", "print the JSON schema of run reports")
    return parser


# ---------------------------------------------------------------------------
# map loading


def load_map(args) -> tuple[MapSpec, dict | None]:
    if args.map:
        try:
            text = Path(args.map).read_text()
        except OSError as exc:
            raise UsageError(f"cannot read map file: {exc}")
        try:
            fmap = parse_map(text, name=Path(args.map).stem)
        except (ExprSyntaxError, ValueError) as exc:
            raise UsageError(f"{args.map}: {exc}")
        return fmap, None
    name = args.preset or "example"
    if name == "example":
        try:
            params = ExampleFamilyParams(args.L, args.h1, args.h2)
        except ValueError as exc:
            raise UsageError(str(exc))
        return example_family(params).map, params.as_strings()
    return get_preset(name), None


def _family(args) -> ExampleFamilyParams | None:
    if args.map or (args.preset or "example") != "example":
        return None
    return ExampleFamilyParams(args.L, args.h1, args.h2)


def _check_index(fmap: MapSpec, i: int) -> None:
    if not 1 <= i <= fmap.n:
        raise UsageError(f"--index must lie in 1..{fmap.n}")


def _box_for(box: list[list[float]], n: int) -> list[list[float]]:
    if len(box) == 1:
        return box * n
    if len(box) != n:
        raise UsageError(f"box needs 1 or {n} intervals, got {len(box)}")
    return box


def _timed(fn: Callable, *a, **kw):
    t0 = time.perf_counter()
    out = fn(*a, **kw)
    return out, time.perf_counter() - t0


# ---------------------------------------------------------------------------
# subcommands; each returns (checks, exit code, summary lines)


def cmd_jac(args, fmap):
    jac = JacobianExpr(fmap)
    det, wall = _timed(lambda: jac.determinant)
    data = {"determinant": to_text(det), "size": det.size}
    lines = [f"J(F) has {det.size} nodes"]
    checks = []
    if args.at is not None:
        if len(args.at) != fmap.n:
            raise UsageError(f"--at needs {fmap.n} coordinates")
        try:
            val = evaluate_exact(det, args.at)
            data["exact_value"] = val
            lines.append(f"J at {','.join(map(str, args.at))} = {val}")
        except NotExactError:
            val = evaluate(det, [float(v) for v in args.at])
            data["float_value"] = val
            lines.append(f"J at point = {val!r} (not exactly representable)")
        except (DomainError, ZeroDivisionError) as exc:
            raise UsageError(f"J undefined at the point: {exc}")
    checks.append(CheckRecord("jacobian", "completed", data=data, wall_time=wall))
    fam = _family(args)
    if fam is not None:
        closed = example_family(fam).jacobian_closed_form()
        rng = np.random.default_rng(args.rng_seed)
        box = _box_for(args.box, 3)
        lo, hi = np.array(box).T
        P = lo + (hi - lo) * rng.random((args.samples, 3))
        from .scalar_expr import compile_exprs

        a = jac.det_at(P)
        b = compile_exprs([closed], 3).at_points(P)[:, 0]
        rel = float(np.max(np.abs(a - b) / np.abs(b)))
        tol = max(args.tol_rel, 1e-8)
        ok = rel <= tol
        checks.append(CheckRecord("closed_form", "pass" if ok else "fail",
                                  witnesses=[] if ok else [P[int(np.argmax(np.abs(a - b) / np.abs(b)))]],
                                  tolerances={"relative": tol}, data={"samples": args.samples, "max_rel_error": rel}))
        lines.append(f"closed form: max rel error {rel:.3e} ({'pass' if ok else 'FAIL'})")
        if not ok:
            return checks, EXIT_WITNESS, lines
    return checks, EXIT_OK, lines


def cmd_delta(args, fmap):
    _check_index(fmap, args.index)
    X = delta_field(fmap, args.index)
    comps = [to_text(c) for c in X.components]
    rng = np.random.default_rng(args.rng_seed)
    rep, wall = _timed(verify_identities, fmap, args.index, args.verify, rng=rng,
                       box=_box_for(args.box, fmap.n), abs_tol=args.tol_rel, rel_tol=args.tol_rel, field_=X)
    verdict = "pass" if rep.passed else "fail"
    checks = [
        CheckRecord("field", "completed", data={"index": args.index, "components": comps}),
        CheckRecord("identities", verdict, witnesses=[rep.first_violation] if rep.first_violation else [],
                    tolerances=rep.tolerances, data=rep.to_dict(), wall_time=wall),
    ]
    lines = [f"Delta_{args.index} components:"] + [f"  c{k} = {c}" for k, c in enumerate(comps, 1)]
    lines.append(f"identities at {rep.samples} points: {verdict} "
                 f"(annihilation {rep.max_annihilation_error:.2e}, determinant {rep.max_determinant_rel_error:.2e})")
    return checks, EXIT_OK if rep.passed else EXIT_WITNESS, lines


def cmd_trace(args, fmap):
    _check_index(fmap, args.index)
    if len(args.seed) != fmap.n:
        raise UsageError(f"--seed needs {fmap.n} coordinates")
    X = delta_field(fmap, args.index)
    opts = of.TraceOptions(rtol=args.tol_rel, atol=args.tol_abs, arclength=not args.raw,
                           both_directions=not args.forward_only)
    try:
        tr, wall = _timed(of.trace, X, args.seed, args.arclen, opts)
    except ValueError as exc:
        raise UsageError(str(exc))
    cons = of.conservation_check(tr, fmap, args.index)
    mono = of.monotonicity_check(tr, fmap, args.index, X=X, jac=X.jac)
    data = {"termination": tr.termination, "stats": tr.stats(), "events": tr.events,
            "samples": int(sum(len(b.t) for b in tr.branches)), "end_points": [b.y[-1] for b in tr.branches]}
    checks = [
        CheckRecord("trace", "completed", data=data, wall_time=wall,
                    tolerances={"rtol": args.tol_rel, "atol": args.tol_abs}),
        CheckRecord("conservation", "completed", data=cons),
        CheckRecord("monotonicity", "pass" if mono.ok else "fail",
                    witnesses=[mono.violation] if mono.violation else [], tolerances={"relative": 1e-6},
                    data={"sign": mono.sign, "max_rel_error": mono.max_rel_error, "samples": mono.samples}),
    ]
    if args.csv:
        header, table = trace_table(tr, fmap, X)
        write_csv(args.csv, header, table)
    lines = [f"trace: {data['samples']} samples, termination {tr.termination}",
             f"max drift of the other components: {cons['max_drift']:.3e}",
             f"d/dt f_{args.index}: sign {mono.sign:+d}, max rel error vs J {mono.max_rel_error:.2e}"]
    return checks, EXIT_OK, lines


def cmd_probe(args, fmap):
    _check_index(fmap, args.index)
    X = delta_field(fmap, args.index)
    opts = of.TraceOptions(rtol=args.tol_rel, atol=args.tol_abs)
    try:
        res, wall = _timed(of.escape_return_probe, X, _box_for(args.box, fmap.n), args.ladder, args.seeds,
                           args.budget, opts)
    except ValueError as exc:
        raise UsageError(str(exc))
    doc = res.to_dict()
    witnesses = [{"kind": "trapped", **t} for t in doc["trapped"]]
    for rung, segs in doc["segments"].items():
        witnesses += [{"kind": "return", "rung": float(rung), **s} for s in segs]
    checks = [CheckRecord("escape_return", res.verdict, witnesses=witnesses,
                          tolerances={"rtol": args.tol_rel, "atol": args.tol_abs},
                          data={k: doc[k] for k in ("box", "ladder", "budget", "per_seed")}, wall_time=wall)]
    lines = [f"probe Delta_{args.index}: {res.verdict} ({len(doc['trapped'])} trapped, "
             f"{sum(len(v) for v in doc['segments'].values())} return segments)"]
    return checks, EXIT_WITNESS if res.found else EXIT_OK, lines


def cmd_census(args, fmap):
    if args.map or (args.preset or "example") != "example":
        raise UsageError("census applies to the example family only")
    box = _box_for(args.box, 3)
    checks, lines, ok_all = [], [], True
    seen_f3 = False
    rows_table = []
    for label, h in (("f_h1", args.h1), ("f_h2", args.h2)):
        res, wall = _timed(fa.level_census, args.L, h, args.c, box, args.pitch)
        rows = []
        for r in res.rows:
            if r.function == "f3":
                if seen_f3:
                    continue
                name = "f3"
            else:
                name = label
            d = r.to_dict()
            d["function"] = name
            rows.append(d)
            rows_table.append([name, d["c"], d["sign_class"], r.expected, r.numeric, r.method])
            ok_all &= r.agree
        seen_f3 = True
        verdict = "pass" if all(x["agree"] for x in rows) else "fail"
        checks.append(CheckRecord(f"census_{label}", verdict, data={"rows": rows, "h": h, "L": args.L},
                                  tolerances={"pitch": args.pitch}, wall_time=wall))
        for x in rows:
            lines.append(f"{x['function']:5s} {x['sign_class']}: {x['numeric']} components "
                         f"(expected {x['expected']}, {x['method']})")
    if args.csv:
        write_csv(args.csv, ["function", "c", "sign_class", "expected", "numeric", "method"], rows_table)
    return checks, EXIT_OK, lines


def _grid_levels(n: int) -> list[Fraction]:
    return [Fraction(2 * k - (n - 1), 2) if (n - 1) % 2 else Fraction(k - (n - 1) // 2) for k in range(n)]


def cmd_corollary(args, fmap):
    if fmap.n != 3:
        raise UsageError("corollary needs a map of three variables")
    _check_index(fmap, args.index)
    lj = args.levels_j or _grid_levels(args.grid[0])
    lk = args.levels_k or _grid_levels(args.grid[1])
    try:
        res, wall = _timed(fa.corollary_check, fmap, args.index, lj, lk, _box_for(args.box, 3), args.pitch,
                           family=_family(args), rng=np.random.default_rng(args.rng_seed), rtol=args.tol_rel)
    except ValueError as exc:
        raise UsageError(str(exc))
    doc = res.to_dict()
    witnesses = [lv for lv in doc["levels"] if lv["verdict"] == "disconnected"]
    checks = [CheckRecord("corollary", res.verdict, witnesses=witnesses, tolerances={"pitch": args.pitch},
                          data=doc, wall_time=wall)]
    lines = [f"corollary for slot {args.index}: {res.verdict}"]
    for lv in res.levels:
        lines.append(f"  ({', '.join(lv.levels)}): numeric {lv.numeric}, exact {lv.exact} -> {lv.verdict}")
    return checks, EXIT_WITNESS if res.verdict == "disconnected" else EXIT_OK, lines


def cmd_collisions(args, fmap):
    pairs, wall = _timed(fa.collision_search, fmap, _box_for(args.box, fmap.n), args.pitch,
                         max_pairs=args.max_pairs, tol=args.tol_rel)
    verdict = "witness found" if pairs else "no witness at scale"
    checks = [CheckRecord("collisions", verdict, witnesses=[p.to_dict() for p in pairs],
                          tolerances={"image_residual_scaled": args.tol_rel}, data={"pairs": len(pairs)},
                          wall_time=wall)]
    lines = [f"collisions: {len(pairs)} verified pairs"]
    for p in pairs[:5]:
        lines.append(f"  {np.round(p.p, 6).tolist()} ~ {np.round(p.q, 6).tolist()} -> {np.round(p.image, 6).tolist()}")
    return checks, EXIT_WITNESS if pairs else EXIT_OK, lines


def cmd_jelonek(args, fmap):
    try:
        res, wall = _timed(fa.jelonek_probe, fmap, args.rays, args.radius, image_bound=args.image_bound,
                           drift_tol=args.drift_tol, bases_per_axis=args.bases)
    except ValueError as exc:
        raise UsageError(str(exc))
    verdict = "witness found" if res.candidates else "no witness at scale"
    checks = [CheckRecord("jelonek", verdict, witnesses=res.clusters, tolerances={"drift": args.drift_tol},
                          data={"candidates": res.candidates, "settings": res.settings}, wall_time=wall)]
    lines = [f"non-properness candidates: {len(res.candidates)} in {len(res.clusters)} clusters"]
    return checks, EXIT_WITNESS if res.candidates else EXIT_OK, lines


def cmd_count(args, fmap):
    n = fmap.n
    if args.drop is not None:
        _check_index(fmap, args.drop)
    k = n if args.drop is None else n - 1
    box = _box_for(args.box, n)
    if args.levels:
        levels = args.levels
        if any(len(lv) != k for lv in levels):
            raise UsageError(f"each level needs {k} values")
    else:
        rng = np.random.default_rng(args.rng_seed)
        lo, hi = np.array(box).T
        inner = lo + 0.25 * (hi - lo), hi - 0.25 * (hi - lo)
        P = inner[0] + (inner[1] - inner[0]) * rng.random((args.sample_levels, n))
        from .scalar_expr import compile_exprs

        V = compile_exprs(fmap.components, n).at_points(P)
        if args.drop is not None:
            V = np.delete(V, args.drop - 1, axis=1)
        levels = V.tolist()
    res, wall = _timed(fa.component_count_check, fmap, levels, box, args.pitch, drop_index=args.drop)
    doc = res.to_dict()
    witnesses = [r for r in doc["per_level"] if r["d"] != 1]
    checks = [CheckRecord("component_count", res.verdict, witnesses=witnesses, tolerances={"pitch": args.pitch},
                          data=doc, wall_time=wall)]
    lines = [f"component counts: {[r['d'] for r in doc['per_level']]} -> {res.verdict}"]
    code = EXIT_WITNESS if res.verdict == "witness found" else EXIT_OK
    return checks, code, lines


def _interval_arg(text: str):
    if text in NAMED_INTERVALS:
        return text
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise UsageError(f"interval must be a name or 'a,b', got {text!r}")
    conv = lambda s, inf: None if s in ("", inf, "inf" if inf == "+inf" else "-inf") else Fraction(s)
    try:
        return conv(parts[0], "-inf"), conv(parts[1], "+inf")
    except ValueError:
        raise UsageError(f"bad interval {text!r}")


def cmd_sturm(args, fmap):
    if args.k_alpha is not None:
        if args.h <= 0:
            raise UsageError("--h must be positive")
        p = k_alpha_poly(args.k_alpha, args.h)
    elif args.poly:
        try:
            p = UniPoly.parse(args.poly)
        except (ExprSyntaxError, ValueError) as exc:
            raise UsageError(f"cannot read polynomial: {exc}")
    else:
        p = m_poly()
    if p.is_zero:
        raise UsageError("the zero polynomial has no Sturm certificate")
    interval = _interval_arg(args.interval)
    try:
        n_roots = count_roots(p, interval)
        sign = certify_sign(p, interval)
    except ValueError as exc:
        raise UsageError(str(exc))
    roots = [{"lo": r.lo, "hi": r.hi, "multiplicity": r.multiplicity, "approx": r.approx}
             for r in isolate_roots(p)] if p.degree > 0 else []
    chain = [str(q) for q in sturm_chain(p)]
    data = {"polynomial": str(p), "interval": args.interval, "roots_in_interval": n_roots,
            "sign": sign.name, "sturm_chain": chain, "real_roots": roots}
    checks = [CheckRecord("sturm", "completed", data=data, tolerances={"exact": True})]
    lines = [f"p = {p}", f"distinct real roots in {args.interval}: {n_roots}", f"sign: {sign.name}"]
    return checks, EXIT_OK, lines


COMMANDS = {
    "jac": cmd_jac,
    "delta": cmd_delta,
    "trace": cmd_trace,
    "probe-surjectivity": cmd_probe,
    "census": cmd_census,
    "corollary": cmd_corollary,
    "collisions": cmd_collisions,
    "jelonek": cmd_jelonek,
    "count": cmd_count,
    "sturm": cmd_sturm,
}

_NO_MAP = {"sturm"}
_SETTINGS_SKIP = {"command", "out", "json", "csv", "map", "preset"}


def run(argv: Sequence[str] | None = None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    raw = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(preprocess_argv(raw))
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "report-schema":
        stdout.write(dumps(REPORT_SCHEMA))
        return EXIT_OK
    t0 = time.perf_counter()
    try:
        if args.command in _NO_MAP:
            fmap, mapinfo = None, None
        else:
            fmap, params = load_map(args)
            mapinfo = map_fingerprint(fmap, params)
        checks, code, lines = COMMANDS[args.command](args, fmap)
    except UsageError as exc:
        print(f"fiberscope {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    settings = {k: v for k, v in sorted(vars(args).items()) if k not in _SETTINGS_SKIP}
    report = RunReport(["fiberscope"] + raw, args.command, mapinfo, settings, checks, code,
                       time.perf_counter() - t0)
    if args.out:
        try:
            emit_report(report, args.out)
        except OSError as exc:
            print(f"fiberscope: cannot write report: {exc}", file=sys.stderr)
            return EXIT_USAGE
    if args.json:
        stdout.write(report.to_json())
    else:
        for line in lines:
            print(line, file=stdout)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
