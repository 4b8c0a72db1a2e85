"""Checkpoint files.

Layout: a UTF-8 text header, then raw little-endian float64 payload::

    STSGG-CHECKPOINT 1
    <count>
    <name> <rows> <cols>      (one line per array, payload order)
    END

The payload holds each array row-major, concatenated in header order.
"""
from __future__ import annotations

import io
import os
from pathlib import Path

import numpy as np

MAGIC = "STSGG-CHECKPOINT 1"


class CheckpointError(ValueError):
    pass


class CompatibilityError(ValueError):
    pass


def dumps(arrays: dict[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    lines = [MAGIC, str(len(arrays))]
    for name, a in arrays.items():
        a = np.asarray(a)
        if a.ndim != 2:
            raise CheckpointError(f"array {name!r} must be 2-D, got shape {a.shape}")
        if not name or any(c.isspace() for c in name):
            raise CheckpointError(f"invalid array name {name!r}")
        lines.append(f"{name} {a.shape[0]} {a.shape[1]}")
    lines.append("END")
    buf.write(("\n".join(lines) + "\n").encode())
    for a in arrays.values():
        buf.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return buf.getvalue()


def loads(blob: bytes) -> dict[str, np.ndarray]:
    pos = 0
    header: list[str] = []
    while True:
        nl = blob.find(b"\n", pos)
        if nl < 0:
            raise CheckpointError(f"truncated header at line {len(header) + 1}")
        line = blob[pos:nl].decode()
        pos = nl + 1
        if line == "END":
            break
        header.append(line)
    if not header or header[0] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic line)")
    try:
        count = int(header[1])
    except (IndexError, ValueError):
        raise CheckpointError("line 2: expected array count") from None
    entries = header[2:]
    if len(entries) != count:
        raise CheckpointError(f"header lists {len(entries)} arrays, count says {count}")
    out: dict[str, np.ndarray] = {}
    for lineno, entry in enumerate(entries, start=3):
        parts = entry.split()
        if len(parts) != 3:
            raise CheckpointError(f"line {lineno}: expected 'name rows cols'")
        name, rows, cols = parts[0], int(parts[1]), int(parts[2])
        nbytes = rows * cols * 8
        if pos + nbytes > len(blob):
            raise CheckpointError(f"payload truncated while reading {name!r}")
        out[name] = np.frombuffer(blob, dtype="<f8", count=rows * cols, offset=pos).reshape(rows, cols).astype(np.float64)
        pos += nbytes
    if pos != len(blob):
        raise CheckpointError(f"{len(blob) - pos} trailing bytes after payload")
    return out


def save(path: str | os.PathLike, arrays: dict[str, np.ndarray]) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dumps(arrays))
    os.replace(tmp, path)


def load(path: str | os.PathLike) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())
