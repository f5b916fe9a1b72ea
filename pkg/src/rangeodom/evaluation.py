"""Drift metrics over fixed-length segments and triplet composition checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .pose import pose_distance

SEGMENT_LENGTHS = (100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0)


class EmptyReportError(ValueError):
    """No segment of any evaluated length fits in the ground-truth path."""


@dataclass
class LengthRow:
    length: float
    t_err_pct: float
    r_err_deg_per_100m: float
    segments: int


@dataclass
class EvalReport:
    t_rel: float
    r_rel: float
    rows: list = field(default_factory=list)
    segment_count: int = 0

    def to_record(self) -> str:
        parts = [f"t_rel_pct={self.t_rel!r}", f"r_rel_deg_per_100m={self.r_rel!r}",
                 f"segments={self.segment_count}"]
        for row in self.rows:
            L = int(row.length)
            parts += [f"len_{L}_t={row.t_err_pct!r}", f"len_{L}_r={row.r_err_deg_per_100m!r}",
                      f"len_{L}_n={row.segments}"]
        return "\n".join(parts)

    def to_table(self) -> str:
        lines = [f"{'length_m':>9} {'segments':>9} {'t_err_%':>10} {'r_err_deg/100m':>15}"]
        for row in self.rows:
            lines.append(f"{row.length:9.0f} {row.segments:9d} {row.t_err_pct:10.4f} "
                         f"{row.r_err_deg_per_100m:15.4f}")
        lines.append(f"{'all':>9} {self.segment_count:9d} {self.t_rel:10.4f} {self.r_rel:15.4f}")
        return "\n".join(lines)


def arc_lengths(poses) -> np.ndarray:
    t = np.array([p.t for p in poses])
    steps = np.linalg.norm(np.diff(t, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(steps)])


def rotation_angle(R) -> float:
    """Angle of a rotation matrix from its trace, clamped into acos' domain."""
    c = 0.5 * (np.trace(R) - 1.0)
    return math.acos(min(1.0, max(-1.0, c)))


def segment_error(est, gt, i, j):
    """Relative-pose error matrix of the segment from frame i to frame j."""
    d_gt = np.linalg.inv(gt[i]) @ gt[j]
    d_est = np.linalg.inv(est[i]) @ est[j]
    if np.array_equal(d_gt, d_est):
        return np.eye(4)  # exact, where the product would leave rounding residue
    return np.linalg.inv(d_est) @ d_gt


def evaluate_trajectory(est, gt, lengths=SEGMENT_LENGTHS) -> EvalReport:
    """Translational (%) and rotational (deg/100 m) drift averaged over segments.

    Every frame is a segment start; the segment of length L ends at the first
    frame whose ground-truth arc length from the start reaches L. The headline
    numbers are the mean over all segments, i.e. the per-length means weighted
    by segment count. Lengths with no segment are omitted from the table.
    """
    if len(est) != len(gt):
        raise ValueError(f"trajectory lengths differ: {len(est)} vs {len(gt)}")
    if len(gt) < 2:
        raise ValueError("need at least two poses")
    E = [p.as_matrix() for p in est]
    G = [p.as_matrix() for p in gt]
    dist = arc_lengths(gt)
    rows = []
    all_t, all_r = [], []
    for L in lengths:
        ends = np.searchsorted(dist, dist + L, side="left")
        t_errs, r_errs = [], []
        for i, j in enumerate(ends):
            if j >= len(dist):
                continue
            err = segment_error(E, G, i, int(j))
            t_errs.append(np.linalg.norm(err[:3, 3]) / L * 100.0)
            r_errs.append(math.degrees(rotation_angle(err[:3, :3])) / L * 100.0)
        if t_errs:
            rows.append(LengthRow(L, float(np.mean(t_errs)), float(np.mean(r_errs)), len(t_errs)))
            all_t += t_errs
            all_r += r_errs
    if not all_t:
        raise EmptyReportError(f"ground-truth path ({dist[-1]:.1f} m) shorter than {min(lengths)} m")
    return EvalReport(float(np.mean(all_t)), float(np.mean(all_r)), rows, len(all_t))


@dataclass(frozen=True)
class CompositionReport:
    max_angle_deg: float
    max_translation: float
    per_triplet: tuple

    def to_record(self) -> str:
        return (f"max_angle_deg={self.max_angle_deg!r} max_translation_m={self.max_translation!r} "
                f"triplets={len(self.per_triplet)}")


def pair_composition_check(step_poses, skip_poses) -> CompositionReport:
    """Compare each two-step pose with the composition of its one-step poses.

    ``step_poses[k]`` is T(k -> k+1) and ``skip_poses[k]`` is T(k -> k+2),
    both in the same direction convention. For triplet k the inconsistency is
    the pose distance between ``skip_poses[k]`` and
    ``step_poses[k+1] @ step_poses[k]``.
    """
    step_poses = list(step_poses)
    skip_poses = list(skip_poses)
    if len(step_poses) < 2:
        raise ValueError("need at least three scans (two step poses)")
    if len(skip_poses) != len(step_poses) - 1:
        raise ValueError("expected one skip pose per consecutive pair of steps")
    per = tuple(pose_distance(skip_poses[k], step_poses[k + 1] @ step_poses[k])
                for k in range(len(skip_poses)))
    return CompositionReport(max(a for a, _ in per), max(t for _, t in per), per)


def triplet_poses(matrices, estimator):
    """Run ``estimator(a, b) -> PoseSE3`` (mapping a's frame into b's) over a sequence.

    Returns the ``(step_poses, skip_poses)`` arguments of
    :func:`pair_composition_check`.
    """
    steps = [estimator(matrices[k], matrices[k + 1]) for k in range(len(matrices) - 1)]
    skips = [estimator(matrices[k], matrices[k + 2]) for k in range(len(matrices) - 2)]
    return steps, skips

