"""File formats: PPM/PGM images, raw float maps, ASCII PLY meshes and point files, CSV tables."""

from __future__ import annotations

import csv
from pathlib import Path
import struct

import numpy as np

from .mesh import TriangleMesh

FLOAT_MAP_MAGIC = b"EMAP"


def to_bytes(values) -> np.ndarray:
    """[0, 1] reals to 8-bit with floor(c * 255 + 0.5)."""
    return np.floor(np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def write_ppm(path, image) -> None:
    image = np.asarray(image)
    h, w, _ = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(to_bytes(image).tobytes())


def write_pgm(path, values) -> None:
    values = np.asarray(values)
    h, w = values.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(to_bytes(values).tobytes())


def _read_netpbm(path, magic: bytes):
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    if tokens[0] != magic:
        raise ValueError(f"{path}: expected {magic!r} header, found {tokens[0]!r}")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 is supported")
    return w, h, np.frombuffer(raw, dtype=np.uint8, offset=pos + 1)


def read_ppm(path) -> np.ndarray:
    w, h, data = _read_netpbm(path, b"P6")
    return data[: w * h * 3].reshape(h, w, 3).astype(np.float64) / 255.0


def read_pgm(path) -> np.ndarray:
    w, h, data = _read_netpbm(path, b"P5")
    return data[: w * h].reshape(h, w)


def write_float_map(path, values, n_samples: int = 0) -> None:
    """16-byte header (magic, width, height, sample count as u32) then little-endian f32 rows."""
    values = np.asarray(values)
    h, w = values.shape
    with open(path, "wb") as fh:
        fh.write(FLOAT_MAP_MAGIC + struct.pack("<3I", w, h, n_samples))
        fh.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def read_float_map(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != FLOAT_MAP_MAGIC:
        raise ValueError(f"{path} is not a float map")
    w, h, _ = struct.unpack_from("<3I", raw, 4)
    return np.frombuffer(raw, dtype="<f4", offset=16, count=w * h).reshape(h, w).astype(np.float64)


def write_ply(path, mesh: TriangleMesh) -> None:
    lines = [
        "ply", "format ascii 1.0",
        f"element vertex {len(mesh.vertices)}",
        "property float x", "property float y", "property float z",
        f"element face {len(mesh.triangles)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    lines += [f"{x:.7g} {y:.7g} {z:.7g}" for x, y, z in mesh.vertices]
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def read_ply(path) -> TriangleMesh:
    """ASCII PLY with an x/y/z vertex element and an optional face element."""
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != "ply":
        raise ValueError(f"{path} is not a PLY file")
    n_vert = n_face = 0
    i = 1
    while text[i].strip() != "end_header":
        tok = text[i].split()
        if tok[:1] == ["format"] and tok[1] != "ascii":
            raise ValueError("only ASCII PLY is supported")
        if tok[:2] == ["element", "vertex"]:
            n_vert = int(tok[2])
        if tok[:2] == ["element", "face"]:
            n_face = int(tok[2])
        i += 1
    body = text[i + 1:]
    verts = np.array([[float(v) for v in line.split()[:3]] for line in body[:n_vert]]).reshape(-1, 3)
    faces = []
    for line in body[n_vert:n_vert + n_face]:
        tok = [int(v) for v in line.split()]
        if tok[0] != 3:
            raise ValueError("only triangular faces are supported")
        faces.append(tok[1:4])
    return TriangleMesh(verts, np.array(faces, dtype=np.int64).reshape(-1, 3))


def write_points(path, points) -> None:
    np.savetxt(path, np.asarray(points).reshape(-1, 3), fmt="%.9g")


def read_points(path) -> np.ndarray:
    return np.loadtxt(path, ndmin=2).reshape(-1, 3)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
