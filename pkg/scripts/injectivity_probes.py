"""Run the injectivity probes on every preset: collisions, non-properness
samples, fiber counts at sampled image points, and the escape/return probe
for each cofactor field. Writes a JSON summary."""

import argparse

import numpy as np

from fiberscope.fiber_atlas import collision_search, component_count_check, jelonek_probe
from fiberscope.field_builder import delta_field, sample_box
from fiberscope.orbit_flow import escape_return_probe
from fiberscope.presets import PRESET_NAMES, get_preset
from fiberscope.report import dumps, to_jsonable
from fiberscope.scalar_expr import compile_exprs


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rng-seed", type=int, default=0)
    ap.add_argument("--levels", type=int, default=10)
    ap.add_argument("--out", default="probes.json")
    args = ap.parse_args()

    rng = np.random.default_rng(args.rng_seed)
    summary = {}
    for name in PRESET_NAMES:
        fmap = get_preset(name)
        n = fmap.n
        pairs = collision_search(fmap, (-3, 3), 0.1, max_pairs=50)
        jel = jelonek_probe(fmap, 128, 1e3)
        levels = compile_exprs(fmap.components, n).at_points(sample_box(rng, (-1.5, 1.5), args.levels, n))
        counts = component_count_check(fmap, levels, (-3, 3), 0.1)
        probes = {i: escape_return_probe(delta_field(fmap, i), (-2, 2), seeds=16).verdict for i in range(1, n + 1)}
        summary[name] = {
            "collision_pairs": len(pairs),
            "first_pair": pairs[0].to_dict() if pairs else None,
            "jelonek_clusters": jel.clusters,
            "count_verdict": counts.verdict,
            "d_values": sorted({r["d"] for r in counts.per_level}),
            "escape_return": probes,
        }
        print(f"{name:<11} pairs {len(pairs):>4}  jelonek clusters {len(jel.clusters):>3}  "
              f"counts {counts.verdict:<28} probes {probes}")
    with open(args.out, "w") as fh:
        fh.write(dumps(to_jsonable(summary)))


if __name__ == "__main__":
    main()
