"""Write a synthetic drive as .bin scans plus ground-truth poses.

    python3 scripts/make_synthetic.py out/ --scans 50 --seed 0 --swept

produces ``out/scans/000000.bin ...`` and ``out/poses.txt`` (KITTI rows,
first pose the identity), ready for ``rangeodom run --scans out/scans --gt out/poses.txt``.
"""

import argparse
import logging
from pathlib import Path

from rangeodom.ingest import write_poses_kitti, write_scan_bin
from rangeodom.synthetic import courtyard_scene, render_sequence, smooth_trajectory, three_plane_scene

SCENES = {"courtyard": courtyard_scene, "three_plane": three_plane_scene}

log = logging.getLogger("make_synthetic")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("out")
    p.add_argument("--scans", type=int, default=50)
    p.add_argument("--step", type=float, default=1.0, help="metres between scans")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scene", choices=sorted(SCENES), default="courtyard")
    p.add_argument("--swept", action="store_true", help="sensor moves during each revolution")
    p.add_argument("--point-noise", type=float, default=0.003, help="per-axis point noise, metres")
    p.add_argument("--jitter", type=float, default=0.5, help="beam jitter, fraction of a cell")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    scene = SCENES[args.scene](args.seed)
    rel, origin = smooth_trajectory(args.scans, args.step, args.seed)
    scans = render_sequence(scene, [origin @ q for q in rel], swept=args.swept, rng=args.seed,
                            point_noise=args.point_noise, jitter=args.jitter)
    out = Path(args.out)
    (out / "scans").mkdir(parents=True, exist_ok=True)
    for k, scan in enumerate(scans):
        write_scan_bin(scan, out / "scans" / f"{k:06d}.bin")
    write_poses_kitti(rel, out / "poses.txt")
    log.info("%d scans (%s, %s) written to %s", len(scans), args.scene,
             "swept" if args.swept else "instantaneous", out)


if __name__ == "__main__":
    main()
