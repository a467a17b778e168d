"""File formats: HM01 grid binary, HW01 weights container, netpbm images,
and the JSON document flavours (canonical points, labelme-compatible
annotations, split manifests).

All writers go through a temp-file + rename so partially written outputs
never appear under the final name.
"""

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .codec import PointSet

GRID_MAGIC = b"HM01"
WEIGHTS_MAGIC = b"HW01"


def _atomic_write_bytes(path, payload):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _as_grid3(arr):
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError(f"grid must be 2-D or 3-D, got shape {arr.shape}")
    return np.ascontiguousarray(arr)


# -- HM01 grid binary --------------------------------------------------------


def _grid_record(arr):
    arr = _as_grid3(arr)
    h, w, c = arr.shape
    return GRID_MAGIC + struct.pack("<III", h, w, c) + arr.tobytes()


def _parse_grid(buf, offset=0):
    if len(buf) < offset + 16:
        raise ValueError("truncated grid header")
    if buf[offset : offset + 4] != GRID_MAGIC:
        raise ValueError(f"bad grid magic {buf[offset:offset + 4]!r}")
    h, w, c = struct.unpack_from("<III", buf, offset + 4)
    start = offset + 16
    end = start + h * w * c * 8
    if end > len(buf):
        raise ValueError("truncated grid record")
    data = np.frombuffer(buf[start:end], dtype="<f8").reshape(h, w, c)
    return data.copy(), end


def write_hm01(path, grid):
    _atomic_write_bytes(path, _grid_record(grid))


def read_hm01(path):
    buf = Path(path).read_bytes()
    grid, end = _parse_grid(buf)
    if end != len(buf):
        raise ValueError(f"{path}: {len(buf) - end} trailing bytes")
    return grid


# -- HW01 weights container ---------------------------------------------------


def write_hw01(path, weights):
    """weights: ordered name -> array map; 4-D tensors fold into channels."""
    parts = [WEIGHTS_MAGIC, struct.pack("<I", len(weights))]
    for name, arr in weights.items():
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 4:
            arr = arr.reshape(arr.shape[0], arr.shape[1], -1)
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(_grid_record(arr))
    _atomic_write_bytes(path, b"".join(parts))


def read_hw01(path):
    buf = Path(path).read_bytes()
    if buf[:4] != WEIGHTS_MAGIC:
        raise ValueError(f"{path}: bad weights magic {buf[:4]!r}")
    if len(buf) < 8:
        raise ValueError(f"{path}: truncated header")
    (count,) = struct.unpack_from("<I", buf, 4)
    offset = 8
    weights = {}
    for _ in range(count):
        if len(buf) < offset + 4:
            raise ValueError(f"{path}: truncated parameter record")
        (nlen,) = struct.unpack_from("<I", buf, offset)
        offset += 4
        name = buf[offset : offset + nlen].decode("utf-8")
        offset += nlen
        grid, offset = _parse_grid(buf, offset)
        weights[name] = grid
    if offset != len(buf):
        raise ValueError(f"{path}: {len(buf) - offset} trailing bytes")
    return weights


# -- netpbm images -------------------------------------------------------------


def write_pgm16(path, heatmap):
    """16-bit P5; sample = round(65535 * value), big-endian per netpbm."""
    arr = np.asarray(heatmap, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise ValueError(f"pgm wants a single-channel map, got {arr.shape}")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("heatmap values must lie in [0, 1]")
    h, w = arr.shape
    samples = np.round(arr * 65535.0).astype(">u2")
    _atomic_write_bytes(path, f"P5\n{w} {h}\n65535\n".encode() + samples.tobytes())


def write_ppm8(path, image):
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"ppm wants (H, W, 3), got {arr.shape}")
    h, w, _ = arr.shape
    samples = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    _atomic_write_bytes(path, f"P6\n{w} {h}\n255\n".encode() + samples.tobytes())


def _read_netpbm_tokens(buf, n):
    """First n whitespace-separated header tokens, skipping # comments.

    Returns (tokens, offset just past the single whitespace byte that
    terminates the last token).
    """
    tokens = []
    i = 0
    while len(tokens) < n:
        if i >= len(buf):
            raise ValueError("truncated netpbm header")
        ch = buf[i : i + 1]
        if ch == b"#":
            while i < len(buf) and buf[i : i + 1] != b"\n":
                i += 1
            i += 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < len(buf) and not buf[j : j + 1].isspace():
                j += 1
            tokens.append(buf[i:j])
            i = j + 1 if len(tokens) == n else j
    return tokens, i


def read_netpbm(path):
    """Read binary P5/P6 (8- or 16-bit) into floats in [0, 1]."""
    buf = Path(path).read_bytes()
    if buf[:2] not in (b"P5", b"P6"):
        raise ValueError(f"{path}: unsupported netpbm magic {buf[:2]!r}")
    tokens, offset = _read_netpbm_tokens(buf, 4)
    magic = tokens[0]
    w, h, maxval = (int(t) for t in tokens[1:])
    channels = 1 if magic == b"P5" else 3
    if maxval == 255:
        dtype, scale = np.uint8, 255.0
    elif maxval == 65535:
        dtype, scale = ">u2", 65535.0
    else:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    count = h * w * channels
    data = np.frombuffer(buf, dtype=dtype, count=count, offset=offset)
    arr = data.astype(np.float64).reshape(h, w, channels) / scale
    return arr[:, :, 0] if channels == 1 else arr


# -- JSON documents -------------------------------------------------------------


def write_json(path, obj):
    _atomic_write_bytes(path, (json.dumps(obj, indent=2) + "\n").encode())


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_points_json(path, points):
    write_json(path, {
        "image_height": points.image_height,
        "image_width": points.image_width,
        "points": [[x, y] for x, y in points.points],
    })


def read_points_json(path):
    doc = read_json(path)
    try:
        return PointSet(tuple((p[0], p[1]) for p in doc["points"]),
                        doc["image_height"], doc["image_width"])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: malformed points document ({exc})") from exc


def read_labelme(path):
    """Parse a labelme-style annotation: point shapes only.

    Returns (points, height, width, n_ignored) where points takes the first
    coordinate pair of every shape with shape_type == "point".
    """
    doc = read_json(path)
    if "imageHeight" not in doc or "imageWidth" not in doc:
        raise ValueError(f"{path}: missing imageHeight/imageWidth")
    if not isinstance(doc.get("shapes"), list):
        raise ValueError(f"{path}: missing shapes list")
    points = []
    ignored = 0
    for shape in doc["shapes"]:
        if shape.get("shape_type") == "point":
            coords = shape.get("points")
            if not coords or len(coords[0]) != 2:
                raise ValueError(f"{path}: point shape without coordinates")
            points.append((float(coords[0][0]), float(coords[0][1])))
        else:
            ignored += 1
    return points, int(doc["imageHeight"]), int(doc["imageWidth"]), ignored


def write_labelme(path, points, image_path=""):
    write_json(path, {
        "shapes": [
            {"label": "point", "points": [[x, y]], "shape_type": "point"}
            for x, y in points.points
        ],
        "imagePath": image_path,
        "imageHeight": points.image_height,
        "imageWidth": points.image_width,
    })


def read_points_any(path):
    """Accept either the canonical points document or a labelme annotation."""
    doc = read_json(path)
    if "shapes" in doc:
        pts, h, w, _ = read_labelme(path)
        return PointSet(tuple(pts), h, w)
    return read_points_json(path)


def write_split_manifest(path, fold_index, train_ids, val_ids):
    write_json(path, {"fold": fold_index, "train": list(train_ids),
                      "val": list(val_ids)})
