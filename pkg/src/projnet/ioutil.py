"""Artifact writing helpers: atomic file writes, CSV with a metadata comment
line, JSON with schema version. Infinities are serialized as the string "inf"
so emitted JSON stays standard."""

from __future__ import annotations

import json
import math
import os
import tempfile


def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path, blob: bytes) -> None:
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header: list[str], rows, metadata: dict | None = None) -> str:
    """Header-row CSV; metadata (seed, config hash, ...) goes in a leading
    '#'-comment line so the table itself stays plain."""
    lines = []
    if metadata:
        kv = " ".join(f"{k}={v}" for k, v in metadata.items())
        lines.append(f"# {kv}")
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(str(c) for c in row))
    return "\n".join(lines) + "\n"


def sanitize_json(obj):
    """Replace non-finite floats with strings json can carry."""
    if isinstance(obj, float):
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        if math.isnan(obj):
            return "nan"
        return obj
    if isinstance(obj, dict):
        return {k: sanitize_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize_json(v) for v in obj]
    return obj


def write_json(path, body: dict) -> None:
    atomic_write_text(path, json.dumps(sanitize_json(body), indent=2) + "\n")


def parse_grid(text: str) -> list[float]:
    """"start:stop:count" -> evenly spaced grid; or a comma list "0,0.2,0.4"."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid must be start:stop:count, got {text!r}")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ValueError("grid count must be >= 1")
        if count == 1:
            return [start]
        step = (stop - start) / (count - 1)
        return [start + i * step for i in range(count)]
    return [float(tok) for tok in text.split(",") if tok.strip()]
