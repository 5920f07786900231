"""How the conserved-quantity drift along Delta_1 orbits of the example
family scales with the integrator tolerance.

Prints the worst drift over the orbits for a ladder of tolerances and the
fitted exponent p in drift ~ tol^p.
"""

import argparse

import numpy as np

from fiberscope.field_builder import delta_field
from fiberscope.orbit_flow import TraceOptions, conservation_check, halton_seeds, trace_many
from fiberscope.presets import example_family


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--orbits", type=int, default=100)
    ap.add_argument("--arclen", type=float, default=100.0)
    ap.add_argument("--index", type=int, default=1)
    ap.add_argument("--tols", type=float, nargs="+", default=[1e-7, 1e-8, 1e-9, 5e-10, 1e-10, 1e-11])
    args = ap.parse_args()

    fam = example_family()
    X = delta_field(fam.map, args.index)
    seeds = halton_seeds((-2, 2), args.orbits, 3)
    drifts = []
    for tol in args.tols:
        trs = trace_many(X, seeds, args.arclen, TraceOptions(rtol=tol, atol=tol * 1e-3))
        d = max(conservation_check(tr, fam.map, args.index)["max_drift"] for tr in trs)
        steps = sum(tr.stats()["steps"] for tr in trs)
        drifts.append(d)
        print(f"rtol {tol:8.1e}  worst drift {d:9.3e}  steps {steps}")
    p = np.polyfit(np.log(args.tols), np.log(drifts), 1)[0]
    print(f"fitted exponent p = {p:.3f}; halving the tolerance divides the drift by about {2**p:.2f}")


if __name__ == "__main__":
    main()
