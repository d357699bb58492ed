from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from polarkit.dataset_io import (
    FrameEntry,
    FrameManifest,
    PoseRecord,
    interpolate_pose,
    load_manifest,
    load_trajectory,
    save_manifest,
    save_trajectory,
    sync_frames,
)
from polarkit.errors import DataError, DomainError, ParseError

HEADER = "frame_id,timestamp,mosaic,cloud,pose\n"


class TestManifest:
    def test_round_trip(self, tmp_path):
        m = FrameManifest((FrameEntry("f0", 0.1, "a.pgm", "a.bin", 0), FrameEntry("f1", 0.2 + 1e-9, "b.pgm")), "val")
        save_manifest(m, tmp_path / "m.csv")
        assert load_manifest(tmp_path / "m.csv") == m

    def test_duplicate_id_reports_line(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text(HEADER + "a,0.0,x.pgm,,\na,1.0,y.pgm,,\n")
        with pytest.raises(ParseError, match="line 3"):
            load_manifest(p)

    def test_header_only(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text(HEADER)
        assert len(load_manifest(p)) == 0

    def test_non_increasing(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text(HEADER + "a,1.0,x.pgm,,\nb,1.0,y.pgm,,\n")
        with pytest.raises(ParseError, match="line 3"):
            load_manifest(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_manifest(tmp_path / "nope.csv")

    def test_constructor_validates(self):
        with pytest.raises(DataError):
            FrameManifest((FrameEntry("a", 1.0, "x"), FrameEntry("a", 2.0, "y")))
        with pytest.raises(DataError):
            FrameManifest((), "holdout")


class TestSync:
    def test_identical(self):
        ts = [0.0, 0.1, 0.2, 0.3]
        assert sync_frames(ts, ts, 0.01) == [(i, i) for i in range(4)]

    def test_hand_example(self):
        assert sync_frames([0.0, 0.1], [0.04], 0.05) == [(0, 0)]

    def test_empty(self):
        assert sync_frames([0.0, 1.0], [], 0.1) == []

    def test_unsorted(self):
        with pytest.raises(DataError):
            sync_frames([1.0, 0.0], [0.0], 0.1)

    def test_closer_claim_wins(self):
        assert sync_frames([0.0, 0.03], [0.025], 0.05) == [(1, 0)]

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0, 100), max_size=20), st.lists(st.floats(0, 100), max_size=20), st.floats(0, 5))
    def test_properties(self, cam, other, skew):
        cam, other = sorted(cam), sorted(other)
        pairs = sync_frames(cam, other, skew)
        assert len({j for _, j in pairs}) == len(pairs) == len({i for i, _ in pairs})
        for i, j in pairs:
            assert abs(cam[i] - other[j]) <= skew


def yaw(deg):
    x, y, z, w = Rotation.from_euler("z", deg, degrees=True).as_quat()
    return (w, x, y, z)


class TestPoses:
    TRAJ = [PoseRecord(0.0, (0, 0, 0), (1, 0, 0, 0)), PoseRecord(1.0, (2, 0, 0), yaw(90))]

    def test_exact_sample(self):
        assert interpolate_pose(self.TRAJ, 1.0) is self.TRAJ[1]

    def test_position_midpoint(self):
        traj = [PoseRecord(0.0, (0, 0, 0), (1, 0, 0, 0)), PoseRecord(2.0, (2, 0, 0), (1, 0, 0, 0))]
        assert interpolate_pose(traj, 1.0).position == pytest.approx((1, 0, 0))

    def test_slerp_midpoint(self):
        q = interpolate_pose(self.TRAJ, 0.5).orientation
        assert q == pytest.approx(yaw(45), abs=1e-9)
        assert q == pytest.approx((math.cos(math.pi / 8), 0, 0, math.sin(math.pi / 8)), abs=1e-9)

    def test_out_of_span(self):
        with pytest.raises(DomainError):
            interpolate_pose(self.TRAJ, 1.5)

    def test_non_unit_quaternion(self):
        with pytest.raises(DomainError):
            PoseRecord(0.0, (0, 0, 0), (1, 1, 0, 0))

    def test_trajectory_round_trip(self, tmp_path):
        save_trajectory(self.TRAJ, tmp_path / "t.csv")
        assert load_trajectory(tmp_path / "t.csv") == self.TRAJ
        assert (tmp_path / "t.csv").read_text().startswith("# frame: local-enu\n")

    def test_trajectory_needs_frame_line(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("timestamp,x,y,z,qw,qx,qy,qz\n")
        with pytest.raises(ParseError, match="line 1"):
            load_trajectory(p)
