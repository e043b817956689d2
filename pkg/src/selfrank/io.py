"""Binary PGM/PPM images, ranked-group manifests and small file helpers."""
from __future__ import annotations

import csv
import io
import os
import re

import numpy as np

from .tensor import atomic_write_bytes

MANIFEST_COLUMNS = ("group_id", "member_index", "phi", "image_path")


def to_bytes8(img) -> np.ndarray:
    """[0, 1] floats to uint8 with round-half-up."""
    v = np.floor(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0 + 0.5)
    return v.astype(np.uint8)


def write_pnm(path, img) -> None:
    """Write a 2-D array as P5 (PGM) or an (H, W, 3) array as P6 (PPM)."""
    img = np.asarray(img)
    if img.ndim == 2:
        magic, h, w = b"P5", img.shape[0], img.shape[1]
    elif img.ndim == 3 and img.shape[2] == 3:
        magic, h, w = b"P6", img.shape[0], img.shape[1]
    elif img.ndim == 3 and img.shape[2] == 1:
        return write_pnm(path, img[:, :, 0])
    else:
        raise ValueError(f"cannot store image of shape {img.shape} as PGM/PPM")
    header = magic + b"\n%d %d\n255\n" % (w, h)
    atomic_write_bytes(path, header + to_bytes8(img).tobytes())


_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def read_pnm(path) -> np.ndarray:
    """Read an 8-bit P5/P6 file into float64 values in [0, 1]."""
    with open(path, "rb") as fh:
        buf = fh.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        m = _TOKEN.match(buf, pos)
        if not m:
            raise ValueError(f"{path}: truncated PNM header")
        fields.append(m.group(1))
        pos = m.end()
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"{path}: unsupported PNM type {magic!r}")
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit images are supported")
    pos += 1
    ch = 1 if magic == b"P5" else 3
    raw = np.frombuffer(buf, dtype=np.uint8, count=w * h * ch, offset=pos)
    img = raw.astype(np.float64) / 255.0
    return img.reshape(h, w) if ch == 1 else img.reshape(h, w, 3)


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_csv(path, columns, rows) -> None:
    atomic_write_text(path, csv_text(columns, rows))


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_manifest(path, rows) -> None:
    """rows: iterables of (group_id, member_index, phi, image_path)."""
    write_csv(path, MANIFEST_COLUMNS, rows)


def read_manifest(path):
    """Return {group_id: [(member_index, phi, image_path), ...]} sorted by member."""
    groups: dict[int, list] = {}
    for r in read_csv(path):
        groups.setdefault(int(r["group_id"]), []).append(
            (int(r["member_index"]), float(r["phi"]), r["image_path"]))
    for g in groups.values():
        g.sort()
    return groups


def resolve(base, rel):
    return rel if os.path.isabs(rel) else os.path.join(base, rel)
