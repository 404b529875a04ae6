"""Binary field snapshots: little-endian float64 (re, im) pairs with a JSON
sidecar header carrying grid metadata and a CRC-32 payload checksum."""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

__all__ = ["SnapshotHeader", "SnapshotError", "write_snapshot", "read_snapshot"]

_LAYOUT = "c128-le-rowmajor-x2fastest"


class SnapshotError(RuntimeError):
    """Snapshot payload/header mismatch or corruption."""


@dataclass(frozen=True)
class SnapshotHeader:
    dims: tuple[int, int]
    spacing: tuple[float, float]
    origin: tuple[float, float]
    time: float
    velocity: float
    layout: str = _LAYOUT
    checksum: int = 0
    config_hash: str = ""


def _payload(field: np.ndarray) -> bytes:
    flat = np.ascontiguousarray(field, dtype=np.complex128)
    pairs = np.empty(flat.shape + (2,), dtype="<f8")
    pairs[..., 0] = flat.real
    pairs[..., 1] = flat.imag
    return pairs.tobytes()


def write_snapshot(field: np.ndarray, header: SnapshotHeader, path: str | Path) -> Path:
    """Write the field payload and its sidecar header (same stem, .json)."""
    path = Path(path)
    if field.shape != tuple(header.dims):
        raise SnapshotError(f"field shape {field.shape} does not match header dims {header.dims}")
    payload = _payload(field)
    header = SnapshotHeader(**{**asdict(header), "checksum": zlib.crc32(payload),
                               "layout": _LAYOUT})
    path.write_bytes(payload)
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps(asdict(header), sort_keys=True, indent=1) + "\n")
    return path


def read_snapshot(path: str | Path) -> tuple[np.ndarray, SnapshotHeader]:
    """Read a snapshot, verifying payload length and checksum."""
    path = Path(path)
    sidecar = path.with_suffix(".json")
    try:
        meta = json.loads(sidecar.read_text())
    except FileNotFoundError as exc:
        raise SnapshotError(f"missing sidecar header: {sidecar}") from exc
    header = SnapshotHeader(
        dims=tuple(meta["dims"]),
        spacing=tuple(meta["spacing"]),
        origin=tuple(meta["origin"]),
        time=meta["time"],
        velocity=meta["velocity"],
        layout=meta["layout"],
        checksum=meta["checksum"],
        config_hash=meta.get("config_hash", ""),
    )
    payload = path.read_bytes()
    n1, n2 = header.dims
    expected = n1 * n2 * 16
    if len(payload) != expected:
        raise SnapshotError(
            f"payload length {len(payload)} does not match dims {header.dims} "
            f"(expected {expected} bytes)"
        )
    if zlib.crc32(payload) != header.checksum:
        raise SnapshotError(f"checksum mismatch for {path}")
    pairs = np.frombuffer(payload, dtype="<f8").reshape(n1, n2, 2)
    field = pairs[..., 0] + 1j * pairs[..., 1]
    return field, header
