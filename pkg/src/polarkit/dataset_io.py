"""Recording manifests, trajectories and temporal association."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .errors import DataError, DomainError, ParseError

MANIFEST_HEADER = ("frame_id", "timestamp", "mosaic", "cloud", "pose")
TRAJECTORY_HEADER = ("timestamp", "x", "y", "z", "qw", "qx", "qy", "qz")
TRAJECTORY_FRAME = "local-enu"
SPLITS = ("train", "val", "test")


def _fmt(x: float) -> str:
    # repr round-trips exactly and always has >= 9 significant digits when needed
    return repr(float(x))


@dataclass(frozen=True)
class FrameEntry:
    frame_id: str
    timestamp: float
    mosaic: str
    cloud: Optional[str] = None
    pose: Optional[int] = None


@dataclass(frozen=True)
class FrameManifest:
    entries: tuple[FrameEntry, ...] = ()
    split: Optional[str] = None

    def __post_init__(self):
        entries = tuple(self.entries)
        object.__setattr__(self, "entries", entries)
        if self.split is not None and self.split not in SPLITS:
            raise DataError(f"split must be one of {SPLITS}, got {self.split!r}")
        seen = set()
        for i, e in enumerate(entries):
            if e.frame_id in seen:
                raise DataError(f"duplicate frame_id {e.frame_id!r}")
            seen.add(e.frame_id)
            if i and not e.timestamp > entries[i - 1].timestamp:
                raise DataError(f"timestamps must be strictly increasing (frame {e.frame_id!r})")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def timestamps(self) -> list[float]:
        return [e.timestamp for e in self.entries]


def save_manifest(manifest: FrameManifest, path) -> None:
    buf = io.StringIO()
    if manifest.split is not None:
        buf.write(f"# split: {manifest.split}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_HEADER)
    for e in manifest.entries:
        writer.writerow([e.frame_id, _fmt(e.timestamp), e.mosaic, e.cloud or "", "" if e.pose is None else e.pose])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def load_manifest(path) -> FrameManifest:
    """Parse a manifest CSV; errors name the offending line."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    split = None
    entries: list[FrameEntry] = []
    ids: set[str] = set()
    header_seen = False
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, val = line[1:].partition(":")
            if key.strip() == "split":
                split = val.strip()
            continue
        row = next(csv.reader([line]))
        if not header_seen:
            if tuple(c.strip() for c in row) != MANIFEST_HEADER:
                raise ParseError(f"expected header {','.join(MANIFEST_HEADER)}", lineno)
            header_seen = True
            continue
        if len(row) != len(MANIFEST_HEADER):
            raise ParseError(f"expected {len(MANIFEST_HEADER)} columns, got {len(row)}", lineno)
        frame_id, ts, mosaic, cloud, pose = (c.strip() for c in row)
        try:
            timestamp = float(ts)
            pose_idx = int(pose) if pose else None
        except ValueError:
            raise ParseError("malformed timestamp or pose index", lineno) from None
        if not math.isfinite(timestamp):
            raise ParseError("timestamp must be finite", lineno)
        if frame_id in ids:
            raise ParseError(f"duplicate frame_id {frame_id!r}", lineno)
        if entries and not timestamp > entries[-1].timestamp:
            raise ParseError("timestamps must be strictly increasing", lineno)
        ids.add(frame_id)
        entries.append(FrameEntry(frame_id, timestamp, mosaic, cloud or None, pose_idx))
    if split is not None and split not in SPLITS:
        raise ParseError(f"unknown split {split!r}")
    return FrameManifest(tuple(entries), split)


@dataclass(frozen=True)
class PoseRecord:
    timestamp: float
    position: tuple[float, float, float]
    orientation: tuple[float, float, float, float]  # (w, x, y, z), unit norm

    def __post_init__(self):
        q = tuple(float(v) for v in self.orientation)
        if len(q) != 4 or abs(math.sqrt(sum(v * v for v in q)) - 1.0) > 1e-6:
            raise DomainError(f"orientation must be a unit quaternion, got {q}")
        object.__setattr__(self, "orientation", q)
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))


def save_trajectory(poses, path) -> None:
    buf = io.StringIO()
    buf.write(f"# frame: {TRAJECTORY_FRAME}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRAJECTORY_HEADER)
    for p in poses:
        writer.writerow([_fmt(p.timestamp), *(_fmt(v) for v in p.position), *(_fmt(v) for v in p.orientation)])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def load_trajectory(path) -> list[PoseRecord]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"trajectory not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("#") or lines[0][1:].partition(":")[2].strip() != TRAJECTORY_FRAME:
        raise ParseError(f"first line must be '# frame: {TRAJECTORY_FRAME}'", 1)
    poses: list[PoseRecord] = []
    header_seen = False
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip() or line.startswith("#"):
            continue
        row = [c.strip() for c in line.split(",")]
        if not header_seen:
            if tuple(row) != TRAJECTORY_HEADER:
                raise ParseError(f"expected header {','.join(TRAJECTORY_HEADER)}", lineno)
            header_seen = True
            continue
        if len(row) != len(TRAJECTORY_HEADER):
            raise ParseError(f"expected {len(TRAJECTORY_HEADER)} columns", lineno)
        try:
            vals = [float(v) for v in row]
            rec = PoseRecord(vals[0], tuple(vals[1:4]), tuple(vals[4:8]))
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        if poses and not rec.timestamp > poses[-1].timestamp:
            raise ParseError("timestamps must be increasing", lineno)
        poses.append(rec)
    return poses


def _check_sorted(ts, name: str) -> np.ndarray:
    ts = np.asarray(ts, dtype=np.float64).reshape(-1)
    if np.any(np.diff(ts) < 0):
        raise DataError(f"{name} timestamps must be sorted ascending")
    return ts


def sync_frames(camera_ts, other_ts, max_skew: float) -> list[tuple[int, int]]:
    """Associate each camera timestamp with its nearest other timestamp.

    Pairs farther apart than ``max_skew`` are dropped. Each other index is
    used at most once: the closest camera frame keeps it, the earlier camera
    frame on an exact tie; the losing camera frame stays unpaired.
    """
    cam = _check_sorted(camera_ts, "camera")
    other = _check_sorted(other_ts, "other")
    if not max_skew >= 0:
        raise DomainError("max_skew must be >= 0")
    if cam.size == 0 or other.size == 0:
        return []
    right = np.clip(np.searchsorted(other, cam), 0, other.size - 1)
    left = np.clip(right - 1, 0, other.size - 1)
    d_left = np.abs(cam - other[left])
    d_right = np.abs(other[right] - cam)
    nearest = np.where(d_left <= d_right, left, right)
    skew = np.minimum(d_left, d_right)
    claims: dict[int, tuple[float, int]] = {}
    for i in range(cam.size):
        if skew[i] > max_skew:
            continue
        j = int(nearest[i])
        if j not in claims or skew[i] < claims[j][0]:
            claims[j] = (float(skew[i]), i)
    return sorted((i, j) for j, (_, i) in claims.items())


def interpolate_pose(trajectory, t: float) -> PoseRecord:
    """Pose at time ``t``: linear in position, spherical in orientation."""
    traj = list(trajectory)
    if not traj:
        raise DomainError("empty trajectory")
    times = np.array([p.timestamp for p in traj])
    if not times[0] <= t <= times[-1]:
        raise DomainError(f"t = {t} outside trajectory span [{times[0]}, {times[-1]}]")
    k = int(np.searchsorted(times, t))
    if times[k] == t:
        return traj[k]
    a, b = traj[k - 1], traj[k]
    frac = (t - a.timestamp) / (b.timestamp - a.timestamp)
    pos = tuple(pa + frac * (pb - pa) for pa, pb in zip(a.position, b.position))
    # scipy quaternions are scalar-last
    quats = [(q[1], q[2], q[3], q[0]) for q in (a.orientation, b.orientation)]
    rot = Slerp([0.0, 1.0], Rotation.from_quat(quats))([frac])
    x, y, z, w = rot.as_quat()[0]
    if np.dot((w, x, y, z), a.orientation) < 0:
        w, x, y, z = -w, -x, -y, -z
    return PoseRecord(float(t), pos, (float(w), float(x), float(y), float(z)))
