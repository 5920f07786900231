"""Trace Delta_i orbits of a preset from Halton seeds and write one
plot-ready CSV per orbit (t, x, |field|, f values)."""

import argparse
from pathlib import Path

from fiberscope.field_builder import delta_field
from fiberscope.orbit_flow import halton_seeds, trace_many
from fiberscope.presets import PRESET_NAMES, get_preset
from fiberscope.report import trace_table, write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--preset", choices=PRESET_NAMES, default="example")
    ap.add_argument("--index", type=int, default=1)
    ap.add_argument("--orbits", type=int, default=8)
    ap.add_argument("--arclen", type=float, default=20.0)
    ap.add_argument("--outdir", default="orbits")
    args = ap.parse_args()

    fmap = get_preset(args.preset)
    X = delta_field(fmap, args.index)
    out = Path(args.outdir)
    for k, tr in enumerate(trace_many(X, halton_seeds((-2, 2), args.orbits, fmap.n), args.arclen)):
        header, table = trace_table(tr, fmap, X)
        path = write_csv(out / f"{args.preset}_delta{args.index}_{k:03d}.csv", header, table)
        print(f"{path}: {len(table)} samples, termination {tr.termination}")


if __name__ == "__main__":
    main()
