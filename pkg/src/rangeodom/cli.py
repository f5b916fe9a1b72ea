"""Command-line entry point: ``rangeodom {run,eval-odometry,eval-normals,losses}``.

Exit status: 0 on success, 1 on a runtime failure, 2 on a usage error (bad
flags, missing or empty inputs, malformed config).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import Config, ConfigError, load_config
from .consistency import evaluate_pair, heuristic_mask
from .evaluation import evaluate_trajectory
from .frontend import estimate_relative_pose
from .ingest import FormatError, read_poses_kitti, read_scan_bin, write_poses_kitti
from .mapping import prepare_matrix, run_pipeline
from .normals import evaluate_normals, grid_normals, pca_normals

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("rangeodom")


class UsageError(Exception):
    pass


def _existing(path, kind="file") -> Path:
    p = Path(path)
    ok = p.is_dir() if kind == "dir" else p.is_file()
    if not ok:
        raise UsageError(f"{kind} not found: {path}")
    return p


def _config(args) -> Config:
    if args.config is None:
        return Config()
    try:
        return load_config(_existing(args.config))
    except ConfigError as exc:
        raise UsageError(f"bad config {args.config}: {exc}") from exc


def _scan_files(directory, max_scans=None):
    files = sorted(_existing(directory, "dir").glob("*.bin"))
    if max_scans is not None:
        files = files[:max_scans]
    if not files:
        raise UsageError(f"no .bin scans in {directory}")
    return files


def _mask_arg(value, shape=None):
    """None, 'heuristic', or a loaded .npy array (or directory of them)."""
    if value is None or value == "none":
        return None
    if value == "heuristic":
        return "heuristic"
    p = Path(value)
    if p.is_dir():
        return p
    arr = np.load(_existing(value))
    if shape is not None and arr.shape != shape:
        raise UsageError(f"mask shape {arr.shape} does not match grid {shape}")
    return arr


def _single_pose(path):
    poses = read_poses_kitti(_existing(path))
    if len(poses) != 1:
        raise UsageError(f"{path}: expected exactly one pose row, found {len(poses)}")
    return poses[0]


def cmd_run(args) -> int:
    cfg = _config(args)
    files = _scan_files(args.scans, args.max_scans)
    shape = (cfg.projection.H, cfg.projection.W)
    mask = _mask_arg(args.mask)
    if isinstance(mask, Path):
        masks = []
        for f in files:
            arr = np.load(_existing(mask / (f.stem + ".npy")))
            if arr.shape != shape:
                raise UsageError(f"mask for {f.name} has shape {arr.shape}, grid is {shape}")
            masks.append(arr)
    elif isinstance(mask, np.ndarray):
        if mask.shape != shape:
            raise UsageError(f"mask shape {mask.shape} does not match grid {shape}")
        masks = [mask] * len(files)
    else:
        masks = mask
    scans = [read_scan_bin(f, k) for k, f in enumerate(files)]
    result = run_pipeline(scans, cfg.pipeline(), masks, cfg.eval.heuristic_mask_threshold)
    out = Path(args.output)
    write_poses_kitti(result.trajectory, out)
    diag_path = Path(args.diagnostics) if args.diagnostics else out.with_name(out.name + ".diag")
    with open(diag_path, "w") as f:
        for d in result.diagnostics:
            f.write(d.to_record() + "\n")
        f.write(f"mean_ms_per_scan={result.mean_ms!r}\n")
    fallbacks = sum(d.fallback for d in result.diagnostics)
    print(f"scans={len(scans)} fallbacks={fallbacks} mean_ms_per_scan={result.mean_ms:.1f}")
    log.info("%d scans, %.1f ms/scan", len(scans), result.mean_ms)
    if args.gt:
        gt = read_poses_kitti(_existing(args.gt))[: len(scans)]
        print(evaluate_trajectory(result.trajectory, gt).to_record())
    return EXIT_OK


def cmd_eval_odometry(args) -> int:
    gt_path = args.gt_file or args.gt
    if gt_path is None:
        raise UsageError("ground truth required (positional or --gt)")
    est = read_poses_kitti(_existing(args.est))
    gt = read_poses_kitti(_existing(gt_path))
    if len(est) != len(gt):
        raise UsageError(f"pose counts differ: {len(est)} vs {len(gt)}")
    report = evaluate_trajectory(est, gt)
    print(report.to_table())
    print(report.to_record())
    if args.output:
        Path(args.output).write_text(report.to_record() + "\n")
    return EXIT_OK


def cmd_eval_normals(args) -> int:
    cfg = _config(args)
    scan = read_scan_bin(_existing(args.scan))
    m = prepare_matrix(scan, cfg.pipeline())
    gt_n, gt_valid = pca_normals(scan, cfg.eval.pca_radius, cfg.eval.pca_min_points)
    nm = grid_normals(m, cfg.eval.normal_window)
    report = evaluate_normals(nm, gt_n, gt_valid, m.index)
    text = " ".join(f"{k}={v!r}" for k, v in report.as_dict().items())
    print(text)
    if args.output:
        Path(args.output).write_text(text + "\n")
    return EXIT_OK


def cmd_losses(args) -> int:
    cfg = _config(args)
    pcfg = cfg.pipeline()
    prev = prepare_matrix(read_scan_bin(_existing(args.prev), 0), pcfg)
    cur = prepare_matrix(read_scan_bin(_existing(args.cur), 1), pcfg)
    if args.pose:
        T = _single_pose(args.pose)
    else:
        T_cur_to_prev, _ = estimate_relative_pose(prev, cur, cfg=cfg.frontend)
        T = T_cur_to_prev.inverse()
    gt = _single_pose(args.gt) if args.gt else None
    mask = _mask_arg(args.mask, cur.shape)
    if isinstance(mask, Path):
        raise UsageError("losses takes a single .npy mask, not a directory")
    if isinstance(mask, str):
        mask = heuristic_mask(prev, cur, T, cfg.eval.heuristic_mask_threshold)
    b = evaluate_pair(prev, cur, T, gt, cfg.loss, mask, cfg.eval.grad_clamp, cfg.eval.normalized_l_n)
    print(b.to_record())
    if args.output:
        Path(args.output).write_text(b.to_record() + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rangeodom", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="odometry and mapping over a directory of .bin scans")
    r.add_argument("--scans", required=True)
    r.add_argument("--output", required=True, help="trajectory file (KITTI rows)")
    r.add_argument("--config")
    r.add_argument("--mask", default="none", help="none, heuristic, a .npy file or a directory")
    r.add_argument("--max-scans", type=int)
    r.add_argument("--gt", help="optional ground truth to evaluate against")
    r.add_argument("--diagnostics", help="per-scan key=value log (default <output>.diag)")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval-odometry", help="drift metrics of an estimate against ground truth")
    e.add_argument("est")
    e.add_argument("gt_file", nargs="?")
    e.add_argument("--gt")
    e.add_argument("--output")
    e.set_defaults(func=cmd_eval_odometry)

    n = sub.add_parser("eval-normals", help="grid normals against the PCA reference")
    n.add_argument("scan")
    n.add_argument("--config")
    n.add_argument("--output")
    n.set_defaults(func=cmd_eval_normals)

    lo = sub.add_parser("losses", help="loss breakdown for one scan pair")
    lo.add_argument("prev")
    lo.add_argument("cur")
    lo.add_argument("--pose", help="one KITTI row mapping prev into cur (default: estimated)")
    lo.add_argument("--gt", help="one KITTI row, ground truth for the pose terms")
    lo.add_argument("--mask", default="none")
    lo.add_argument("--config")
    lo.add_argument("--output")
    lo.set_defaults(func=cmd_losses)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "max_scans", None) is not None and args.max_scans < 1:
        print("error: --max-scans must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - any failure maps to exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
