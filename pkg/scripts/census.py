"""Component counts of f_h = c and f3 = c at two grid pitches, printed as a
table and written to JSON."""

import argparse
from fractions import Fraction

from fiberscope.fiber_atlas import level_census
from fiberscope.report import dumps, to_jsonable


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--L", type=Fraction, default=Fraction(1))
    ap.add_argument("--h", type=Fraction, default=Fraction(2))
    ap.add_argument("--pitches", type=float, nargs="+", default=[0.1, 0.05])
    ap.add_argument("--out", default="census.json")
    args = ap.parse_args()

    results = [level_census(args.L, args.h, pitch=p) for p in args.pitches]
    print(f"{'function':<9}{'class':<7}{'expected':>9}" + "".join(f"{'pitch ' + str(p):>12}" for p in args.pitches))
    for k, row in enumerate(results[0].rows):
        cells = "".join(f"{str(r.rows[k].numeric):>12}" for r in results)
        print(f"{row.function:<9}{row.sign_class:<7}{row.expected:>9}{cells}")
        for chart in row.charts:
            print(f"    {chart}")
    with open(args.out, "w") as fh:
        fh.write(dumps(to_jsonable({"pitches": args.pitches, "results": [r.to_dict() for r in results]})))
    print(f"all rows agree: {all(r.all_agree for r in results)}; wrote {args.out}")


if __name__ == "__main__":
    main()
