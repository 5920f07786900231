"""Connectedness of the pieces of f_j = c_j inside f_k = c_k for the example
family on a grid of integer levels, by grid clustering and by the exact
k_alpha route."""

import argparse

from fiberscope.fiber_atlas import corollary_check
from fiberscope.presets import example_family
from fiberscope.report import dumps, to_jsonable


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--index", type=int, default=1)
    ap.add_argument("--pitch", type=float, default=0.1)
    ap.add_argument("--out", default="corollary.json")
    args = ap.parse_args()

    fam = example_family()
    res = corollary_check(fam.map, args.index, pitch=args.pitch, family=fam.params)
    for lv in res.levels:
        print(f"levels {lv.levels}: numeric {lv.numeric:<13} exact {lv.exact:<13} -> {lv.verdict}")
    print(f"overall: {res.verdict}")
    with open(args.out, "w") as fh:
        fh.write(dumps(to_jsonable(res.to_dict())))


if __name__ == "__main__":
    main()
