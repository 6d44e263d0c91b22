#!/usr/bin/env python3
"""Distance of unweighted per-segment filters from the static filter, per segment.

    python3 scripts/ap_vast_convergence.py --v 32 --mu 1 --out convergence.csv
"""
import argparse
import csv

import numpy as np

from vastzones.pipeline import ScenarioConfig, render_ap_vast, render_static
from vastzones.room import RoomSpec, circular_scene, generate_rirs
from vastzones.vast import VastParams


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--loudspeakers", type=int, default=2)
    ap.add_argument("--j-len", type=int, default=16)
    ap.add_argument("--v", type=int, default=32)
    ap.add_argument("--mu", type=float, default=1.0)
    ap.add_argument("--program", choices=("alpha", "beta"), default="beta")
    ap.add_argument("--duration", type=float, default=2.0)
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--out", default="ap_vast_convergence.csv")
    args = ap.parse_args()

    scene = circular_scene(n_loudspeakers=args.loudspeakers, grid=3, spacing=0.1,
                           virtual_source_loudspeaker=1, virtual_source_offset=0.1)
    rirs = generate_rirs(scene, RoomSpec(None, 0.0), 256)
    x = np.random.default_rng(args.seed).standard_normal(int(args.duration * rirs.sample_rate))
    p = VastParams(args.v, args.mu)
    ref = render_static(x, rirs, scene, ScenarioConfig("vast", p, j_len=args.j_len), args.program).filters[0].stacked
    cfg = ScenarioConfig("ap_vast", p, j_len=args.j_len, weighting=False)
    f = render_ap_vast(x, rirs, scene, cfg, args.program)
    starts = cfg.segmenter().starts(x.size)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["segment", "start", "relative_l2"])
        for i, (s, bank) in enumerate(zip(starts, f.filters), start=1):
            w.writerow([i, int(s), np.linalg.norm(bank.stacked - ref) / np.linalg.norm(ref)])
    print(f"wrote {args.out} ({len(starts)} segments)")


if __name__ == "__main__":
    main()
