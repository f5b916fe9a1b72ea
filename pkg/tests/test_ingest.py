import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from rangeodom.ingest import (
    FormatError,
    Scan,
    format_pose_row,
    pose_from_row,
    read_poses_kitti,
    read_scan_bin,
    write_poses_kitti,
    write_scan_bin,
)
from rangeodom.pose import PoseSE3

from conftest import random_pose

f32 = st.floats(-100, 100, width=32, allow_nan=False)


@given(hnp.arrays(np.float32, st.tuples(st.integers(1, 40), st.just(4)), elements=f32))
@settings(max_examples=30, deadline=None)
def test_bin_round_trip(tmp_path_factory, xyzi):
    path = tmp_path_factory.mktemp("bin") / "s.bin"
    write_scan_bin(Scan.from_array(xyzi), path)
    back = read_scan_bin(path, sequence_index=3)
    np.testing.assert_array_equal(back.points, xyzi[:, :3].astype(float))
    np.testing.assert_array_equal(back.intensity, xyzi[:, 3].astype(float))
    assert back.sequence_index == 3
    assert back.timestamp == pytest.approx(0.3)


def test_bin_layout_is_little_endian_float32(tmp_path):
    path = tmp_path / "a.bin"
    np.array([[1.5, -2.0, 3.25, 0.5]], dtype="<f4").tofile(path)
    scan = read_scan_bin(path)
    np.testing.assert_array_equal(scan.points, [[1.5, -2.0, 3.25]])
    assert scan.intensity[0] == 0.5


def test_bin_rejects_bad_sizes(tmp_path):
    (tmp_path / "odd.bin").write_bytes(b"\0" * 17)
    (tmp_path / "empty.bin").write_bytes(b"")
    for name in ("odd.bin", "empty.bin"):
        with pytest.raises(FormatError):
            read_scan_bin(tmp_path / name)


def test_bin_drops_non_finite(tmp_path):
    path = tmp_path / "n.bin"
    np.array([[1, 2, 3, 0], [np.nan, 0, 0, 0], [4, 5, np.inf, 1]], dtype="<f4").tofile(path)
    scan = read_scan_bin(path)
    assert len(scan) == 1 and scan.n_dropped == 2
    np.array([[np.nan, 0, 0, 0]], dtype="<f4").tofile(path)
    with pytest.raises(FormatError):
        read_scan_bin(path)


def test_pose_file_round_trip(tmp_path, rng):
    poses = [random_pose(rng) for _ in range(10)]
    path = tmp_path / "poses.txt"
    write_poses_kitti(poses, path)
    back = read_poses_kitti(path)
    assert len(back) == 10
    for a, b in zip(poses, back):
        assert a.allclose(b, atol=1e-10)
    assert len(format_pose_row(poses[0]).split()) == 12


def test_pose_file_errors(tmp_path):
    path = tmp_path / "p.txt"
    path.write_text("1 0 0 0 0 1 0 0 0 0 1\n")
    with pytest.raises(FormatError, match=":1:"):
        read_poses_kitti(path)
    path.write_text("1 0 0 0 0 1 0 0 0 0 1 x\n")
    with pytest.raises(FormatError):
        read_poses_kitti(path)
    path.write_text("-1 0 0 0 0 1 0 0 0 0 1 0\n")
    with pytest.raises(FormatError, match="det"):
        read_poses_kitti(path)
    path.write_text("\n1 0 0 5 0 1 0 6 0 0 1 7\n\n")
    (p,) = read_poses_kitti(path)
    assert p.allclose(PoseSE3(t=[5, 6, 7]))


def test_slightly_non_orthonormal_rows_are_repaired():
    r = np.eye(3) + 1e-4 * np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0]])
    p = pose_from_row(np.hstack([r, [[1], [2], [3]]]).reshape(-1))
    np.testing.assert_allclose(p.R.T @ p.R, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(p.t, [1, 2, 3])
