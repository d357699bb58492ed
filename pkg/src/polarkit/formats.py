"""On-disk formats.

* binary PGM (P5) mosaics and planes, with an optional ``# polar-layout:``
  comment naming the angles at super-pixel offsets (0,0),(0,1),(1,0),(1,1);
* ``PLNR`` multi-plane float32 containers;
* ``PCL0`` binary point clouds and ASCII XYZ;
* ``key = value`` calibration files and CSV plane-pair files.
"""

from __future__ import annotations

import re
import struct
from pathlib import Path

import numpy as np

from .errors import DataError, ParseError
from .geometry import PinholeCamera, Plane, PointCloud, RigidTransform
from .polar_decode import DEFAULT_LAYOUT, PolarRaw, validate_layout

PLNR_MAGIC = b"PLNR"
PCL_MAGIC = b"PCL0"
_LAYOUT_RE = re.compile(r"polar-layout:\s*([0-9,\s]+)")


def _fmt(x: float) -> str:
    return repr(float(x))


# PGM


def _pgm_tokens(buf: bytes):
    """Yield header tokens and comments of a PGM header; returns data offset at the end."""
    pos = 0
    tokens: list[bytes] = []
    comments: list[str] = []
    while len(tokens) < 4:
        if pos >= len(buf):
            raise ParseError("truncated PGM header")
        ch = buf[pos : pos + 1]
        if ch == b"#":
            end = buf.find(b"\n", pos)
            end = len(buf) if end < 0 else end
            comments.append(buf[pos + 1 : end].decode("ascii", "replace").strip())
            pos = end + 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(buf) and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
                pos += 1
            tokens.append(buf[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    return tokens, comments, pos + 1


def read_pgm(path) -> tuple[np.ndarray, int, list[str]]:
    """``(image, maxval, comments)`` of a binary PGM file."""
    buf = Path(path).read_bytes()
    tokens, comments, offset = _pgm_tokens(buf)
    if tokens[0] != b"P5":
        raise ParseError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError:
        raise ParseError(f"{path}: malformed PGM header") from None
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise ParseError(f"{path}: invalid PGM dimensions or maxval")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height
    if len(buf) - offset < count * dtype.itemsize:
        raise ParseError(f"{path}: truncated PGM raster")
    data = np.frombuffer(buf, dtype=dtype, count=count, offset=offset).reshape(height, width)
    return data.astype(np.uint16 if maxval > 255 else np.uint8), maxval, comments


def write_pgm(path, image, maxval: int | None = None, comments=()) -> None:
    image = np.asarray(image)
    if image.ndim != 2:
        raise DataError("PGM images must be 2-D")
    if maxval is None:
        maxval = 255 if image.dtype == np.uint8 else 65535
    dtype = ">u2" if maxval > 255 else "u1"
    header = [b"P5"]
    header += [f"# {c}".encode("ascii") for c in comments]
    header += [f"{image.shape[1]} {image.shape[0]}".encode(), str(maxval).encode()]
    with open(path, "wb") as fh:
        fh.write(b"\n".join(header) + b"\n")
        fh.write(np.ascontiguousarray(image, dtype=dtype).tobytes())


def read_mosaic(path) -> PolarRaw:
    data, maxval, comments = read_pgm(path)
    layout = DEFAULT_LAYOUT
    for c in comments:
        m = _LAYOUT_RE.search(c)
        if m:
            try:
                layout = validate_layout(int(a) for a in m.group(1).replace(",", " ").split())
            except ValueError as exc:
                raise ParseError(f"{path}: bad polar-layout comment: {exc}") from None
    bit_depth = 8 if maxval <= 255 else 16
    return PolarRaw(data, bit_depth, layout)


def write_mosaic(path, raw: PolarRaw) -> None:
    layout = ",".join(str(a) for a in raw.layout)
    write_pgm(path, raw.data, raw.max_value, comments=[f"polar-layout: {layout}"])


# PLNR


def write_planes(path, planes) -> None:
    """Write equally sized 2-D planes as little-endian float32."""
    planes = [np.asarray(p) for p in planes]
    if not planes or any(p.ndim != 2 or p.shape != planes[0].shape for p in planes):
        raise DataError("PLNR needs one or more equally sized 2-D planes")
    h, w = planes[0].shape
    with open(path, "wb") as fh:
        fh.write(PLNR_MAGIC + struct.pack("<III", w, h, len(planes)))
        for p in planes:
            fh.write(np.ascontiguousarray(p, dtype="<f4").tobytes())


def read_planes(path) -> np.ndarray:
    """``(count, H, W)`` float32 array from a PLNR container."""
    buf = Path(path).read_bytes()
    if buf[:4] != PLNR_MAGIC or len(buf) < 16:
        raise ParseError(f"{path}: not a PLNR container")
    w, h, count = struct.unpack_from("<III", buf, 4)
    need = 16 + 4 * w * h * count
    if len(buf) != need:
        raise ParseError(f"{path}: expected {need} bytes, found {len(buf)}")
    return np.frombuffer(buf, dtype="<f4", offset=16).reshape(count, h, w).astype(np.float32)


def read_image_plane(path) -> np.ndarray:
    """First plane of a PLNR file, or a PGM/PNG image normalized to [0, 1]."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".plnr":
        return read_planes(path)[0].astype(np.float64)
    if suffix == ".pgm":
        data, maxval, _ = read_pgm(path)
        return data.astype(np.float64) / maxval
    if suffix == ".png":
        from PIL import Image

        with Image.open(path) as im:
            arr = np.asarray(im)
        if arr.ndim == 3:
            arr = arr[..., 0]
        top = 65535.0 if arr.dtype == np.uint16 or arr.max(initial=0) > 255 else 255.0
        return arr.astype(np.float64) / top
    raise DataError(f"{path}: unsupported image format {suffix!r}")


# point clouds


def write_cloud(path, cloud: PointCloud) -> None:
    path = Path(path)
    pts = cloud.points
    inten = cloud.intensity if cloud.intensity is not None else np.zeros(len(pts))
    if path.suffix.lower() in (".xyz", ".txt"):
        lines = [" ".join(_fmt(v) for v in (*p, i)) for p, i in zip(pts, inten)]
        path.write_text("".join(line + "\n" for line in lines), encoding="ascii")
        return
    rec = np.empty((len(pts), 4), dtype="<f4")
    rec[:, :3] = pts
    rec[:, 3] = inten
    with open(path, "wb") as fh:
        fh.write(PCL_MAGIC + struct.pack("<I", len(pts)))
        fh.write(rec.tobytes())


def read_cloud(path) -> PointCloud:
    """Read a ``PCL0`` binary cloud, falling back to ASCII ``x y z [intensity]`` rows."""
    path = Path(path)
    buf = path.read_bytes()
    if buf[:4] == PCL_MAGIC:
        (count,) = struct.unpack_from("<I", buf, 4)
        if len(buf) != 8 + 16 * count:
            raise ParseError(f"{path}: expected {count} records")
        rec = np.frombuffer(buf, dtype="<f4", offset=8).reshape(count, 4).astype(np.float64)
        return PointCloud(rec[:, :3], rec[:, 3])
    pts, inten = [], []
    for lineno, line in enumerate(buf.decode("ascii", "replace").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.replace(",", " ").split()
        try:
            vals = [float(v) for v in parts]
        except ValueError:
            raise ParseError("non-numeric XYZ row", lineno) from None
        if len(vals) not in (3, 4):
            raise ParseError(f"expected 3 or 4 columns, got {len(vals)}", lineno)
        pts.append(vals[:3])
        inten.append(vals[3] if len(vals) == 4 else 0.0)
    return PointCloud(np.array(pts).reshape(-1, 3), np.array(inten))


# calibration


def write_calibration(path, camera: PinholeCamera | None, transform: RigidTransform | None) -> None:
    lines = []
    if camera is not None:
        lines += [f"fx = {_fmt(camera.fx)}", f"fy = {_fmt(camera.fy)}", f"cx = {_fmt(camera.cx)}",
                  f"cy = {_fmt(camera.cy)}", f"width = {camera.width}", f"height = {camera.height}"]
    if transform is not None:
        lines.append("R = " + " ".join(_fmt(v) for v in transform.rotation.reshape(-1)))
        lines.append("t = " + " ".join(_fmt(v) for v in transform.translation))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_calibration(path) -> tuple[PinholeCamera | None, RigidTransform | None]:
    """Camera intrinsics and lidar-to-camera extrinsics; either may be absent."""
    values: dict[str, list[float]] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="ascii").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", lineno)
        key, _, val = line.partition("=")
        try:
            values[key.strip()] = [float(v) for v in val.replace(",", " ").split()]
        except ValueError:
            raise ParseError(f"non-numeric value for {key.strip()!r}", lineno) from None
    camera = transform = None
    intr = ("fx", "fy", "cx", "cy", "width", "height")
    if any(k in values for k in intr):
        missing = [k for k in intr if k not in values]
        if missing:
            raise ParseError(f"calibration missing {missing}")
        fx, fy, cx, cy, w, h = (values[k][0] for k in intr)
        camera = PinholeCamera(fx, fy, cx, cy, int(w), int(h))
    if "R" in values or "t" in values:
        if len(values.get("R", [])) != 9 or len(values.get("t", [])) != 3:
            raise ParseError("calibration needs R (9 numbers) and t (3 numbers)")
        transform = RigidTransform(np.array(values["R"]).reshape(3, 3), values["t"])
    return camera, transform


# plane pairs


def write_plane_pairs(path, pairs) -> None:
    rows = []
    for lidar, cam in pairs:
        rows.append(",".join(_fmt(v) for v in (*lidar.normal, lidar.offset, *cam.normal, cam.offset)))
    Path(path).write_text("".join(r + "\n" for r in rows), encoding="ascii")


def read_plane_pairs(path) -> list[tuple[Plane, Plane]]:
    """``nx_l,ny_l,nz_l,d_l,nx_c,ny_c,nz_c,d_c`` rows; blank and ``#`` lines skipped."""
    pairs = []
    for lineno, line in enumerate(Path(path).read_text(encoding="ascii").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            vals = [float(v) for v in line.split(",")]
        except ValueError:
            if not pairs and line[0].isalpha():
                continue  # header row
            raise ParseError("non-numeric plane-pair row", lineno) from None
        if len(vals) != 8:
            raise ParseError(f"expected 8 values, got {len(vals)}", lineno)
        pairs.append((Plane(vals[0:3], vals[3]), Plane(vals[4:7], vals[7])))
    return pairs
