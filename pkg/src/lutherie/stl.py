"""Binary STL reading and writing.

Coordinates are rounded to float32 before normals are computed, so writing a
file, reading it back and writing it again gives identical bytes.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .errors import FormatError
from .mesh import TriangleMesh

HEADER_SIZE = 80
HEADER_PREFIX = "lutherie-kit "
RECORD = np.dtype([("normal", "<f4", (3,)), ("v", "<f4", (3, 3)), ("attr", "<u2")])
assert RECORD.itemsize == 50


def _header(label: str) -> bytes:
    raw = f"{HEADER_PREFIX}{label}".encode("ascii", "replace")[:HEADER_SIZE]
    return raw.ljust(HEADER_SIZE, b"\0")


def facet_normals(soup: np.ndarray) -> np.ndarray:
    """Unit normals from the right-hand rule; zero for degenerate facets."""
    s = soup.astype(np.float64)
    n = np.cross(s[:, 1] - s[:, 0], s[:, 2] - s[:, 0])
    length = np.linalg.norm(n, axis=1, keepdims=True)
    return np.divide(n, length, out=np.zeros_like(n), where=length > 0)


def write_stl(mesh: TriangleMesh, label: str | None = None) -> bytes:
    soup = mesh.soup().astype("<f4")
    records = np.zeros(len(soup), dtype=RECORD)
    records["v"] = soup
    records["normal"] = facet_normals(soup)
    head = _header(label or mesh.name)
    return head + np.uint32(len(soup)).astype("<u4").tobytes() + records.tobytes()


def save_stl(mesh: TriangleMesh, path: str | os.PathLike, label: str | None = None) -> int:
    """Write ``mesh`` to ``path`` atomically (temp file, then rename).

    Returns the number of bytes written.
    """
    data = write_stl(mesh, label)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_bytes(data)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()
    return len(data)


def _records(data: bytes) -> np.ndarray:
    if len(data) < HEADER_SIZE + 4:
        raise FormatError("truncated header", offset=len(data), chunk="header")
    count = int(np.frombuffer(data, "<u4", 1, HEADER_SIZE)[0])
    body = len(data) - HEADER_SIZE - 4
    if body != count * RECORD.itemsize:
        raise FormatError(f"header declares {count} facets but {body} bytes follow",
                          offset=HEADER_SIZE, chunk="facet count")
    return np.frombuffer(data, RECORD, count, HEADER_SIZE + 4)


def read_stl(data: bytes, name: str | None = None) -> TriangleMesh:
    """Decode a binary STL, welding bit-identical vertices.

    The mesh is named after the header label unless ``name`` is given.
    """
    records = _records(data)
    name = stl_label(data) if name is None else name
    soup = records["v"].astype(np.float64).reshape(-1, 3)
    finite = np.isfinite(soup).all(axis=1)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0]) // 3
        raise FormatError("non-finite vertex", offset=HEADER_SIZE + 4 + bad * RECORD.itemsize,
                          chunk="facet")
    if len(soup) == 0:
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), name)
    verts, inverse = np.unique(soup, axis=0, return_inverse=True)
    return TriangleMesh(verts, inverse.reshape(-1, 3), name)


def stored_normals(data: bytes) -> np.ndarray:
    return _records(data)["normal"].astype(np.float64)


def stl_label(data: bytes) -> str:
    """Part label stored in the header, or the raw header text."""
    text = data[:HEADER_SIZE].rstrip(b"\0").decode("ascii", "replace")
    return text.removeprefix(HEADER_PREFIX)


def load_stl(path: str | os.PathLike) -> TriangleMesh:
    return read_stl(Path(path).read_bytes())
