#!/usr/bin/env python3
"""V x mu sweep on a circular scene: closed-form powers plus rendered AC / nSDP.

Writes one CSV row per (program, V, mu). Example::

    python3 scripts/sweep_grid.py --loudspeakers 4 --j-len 16 --out sweep_desk.csv
"""
import argparse
import csv
import time

import numpy as np

from vastzones.eig import joint_diagonalize
from vastzones.metrics import acoustic_contrast_db, nsdp_db
from vastzones.pipeline import desired_field, reproduce, zone_statistics
from vastzones.room import RoomSpec, circular_scene, generate_rirs
from vastzones.signals import frame_slice
from vastzones.vast import MU_GRID, VastParams, default_v_grid, solve_vast, sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--loudspeakers", type=int, default=4)
    ap.add_argument("--j-len", type=int, default=16)
    ap.add_argument("--grid", type=int, default=3)
    ap.add_argument("--spacing", type=float, default=0.1)
    ap.add_argument("--vs-loudspeaker", type=int, default=1)
    ap.add_argument("--vs-offset", type=float, default=0.1)
    ap.add_argument("--t60", type=float, default=0.0)
    ap.add_argument("--k-taps", type=int, default=512)
    ap.add_argument("--duration", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--no-render", action="store_true", help="closed-form columns only")
    ap.add_argument("--out", default="sweep_grid.csv")
    args = ap.parse_args()

    room = RoomSpec((8.0, 6.0, 3.0) if args.t60 > 0 else None, args.t60)
    center = (4.0, 3.0) if args.t60 > 0 else (0.0, 0.0)
    scene = circular_scene(n_loudspeakers=args.loudspeakers, grid=args.grid, spacing=args.spacing,
                           virtual_source_loudspeaker=args.vs_loudspeaker, virtual_source_offset=args.vs_offset,
                           center=center)
    rirs = generate_rirs(scene, room, args.k_taps)
    fs = rirs.sample_rate
    x = np.random.default_rng(args.seed).standard_normal(int(args.duration * fs))
    dim = args.loudspeakers * args.j_len
    v_grid = default_v_grid(dim)

    rows = []
    for zone, dark in (("alpha", "beta"), ("beta", "alpha")):
        t0 = time.perf_counter()
        d = desired_field(x, rirs, scene.all_zone_points(zone))
        stats = zone_statistics(x, d, rirs, scene.zone_points(zone), scene.zone_points(dark), args.j_len)
        jd = joint_diagonalize(stats)
        for cell in sweep(jd, stats.r_b, stats.sigma_d_sq, v_grid, MU_GRID, stats):
            row = {"program": zone, "V": cell.v, "mu": cell.mu, "gamma_db": cell.ac_db, "s_b": cell.s_b,
                   "s_d": cell.s_d, "lagrangian": cell.lagrangian, "ac_monitor_db": "", "nsdp_monitor_db": ""}
            if not args.no_render and cell.error is None:
                p = reproduce(x, rirs, solve_vast(jd, stats.r_b, VastParams(cell.v, cell.mu)))
                b, dk = scene.zone_points(zone, "monitor"), scene.zone_points(dark, "monitor")
                row["ac_monitor_db"] = acoustic_contrast_db(p, b, dk)
                row["nsdp_monitor_db"] = float(np.mean([nsdp_db(p[m], frame_slice(d[m], 0, p.shape[1])) for m in b]))
            rows.append(row)
        print(f"{zone}: {len(v_grid) * len(MU_GRID)} cells in {time.perf_counter() - t0:.1f} s")

    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
