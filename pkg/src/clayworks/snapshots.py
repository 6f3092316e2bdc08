"""Snapshot binary serialization.

Layout (all little-endian, documented in docs/formats.md): a 16-byte
header (magic, version, particle count, splat count) followed by packed
arrays in a fixed order. Restoring and re-serializing a snapshot yields
byte-identical payloads.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .types import AppearanceSet, ParticleSet, Snapshot

MAGIC = 0x434C5953  # "CLYS"
VERSION = 1
_HEADER = struct.Struct("<IIII")


class SnapshotVersionError(ValueError):
    pass


def _arr(buf: memoryview, off: int, dtype, shape) -> tuple[np.ndarray, int]:
    n = int(np.prod(shape)) if shape else 1
    dt = np.dtype(dtype)
    end = off + n * dt.itemsize
    a = np.frombuffer(buf[off:end], dtype=dt).reshape(shape).copy()
    return a, end


def serialize_snapshot(snap: Snapshot) -> bytes:
    p = snap.particles
    a = snap.appearance
    chunks = [_HEADER.pack(MAGIC, VERSION, p.count, a.count)]
    chunks.append(struct.pack("<qd", snap.snapshot_id, snap.timestamp))
    for arr, dt in ((p.x, "<f8"), (p.v, "<f8"), (p.m, "<f8"), (p.vol0, "<f8"),
                    (p.F, "<f8"), (p.C, "<f8"), (p.material_id, "<i4"),
                    (p.category_id, "<i4"), (p.active, "u1")):
        chunks.append(np.ascontiguousarray(arr, dtype=dt).tobytes())
    chunks.append(struct.pack("<I", a.payload.shape[1] if a.count else 0))
    for arr, dt in ((a.x, "<f8"), (a.v, "<f8"), (a.C, "<f8"), (a.F, "<f8"),
                    (a.cov0, "<f8"), (a.cov, "<f8"), (a.payload, "<f4"),
                    (a.material_id, "<i4"), (a.category_id, "<i4"), (a.active, "u1")):
        chunks.append(np.ascontiguousarray(arr, dtype=dt).tobytes())
    objects_blob = json.dumps(
        {str(k): sorted(v) for k, v in sorted(snap.objects.items())},
        sort_keys=True, separators=(",", ":")).encode()
    chunks.append(struct.pack("<I", len(objects_blob)))
    chunks.append(objects_blob)
    return b"".join(chunks)


def deserialize_snapshot(data: bytes) -> Snapshot:
    if len(data) < _HEADER.size:
        raise SnapshotVersionError("snapshot payload truncated")
    magic, version, np_, na = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise SnapshotVersionError(f"bad snapshot magic 0x{magic:08x}")
    if version != VERSION:
        raise SnapshotVersionError(f"unsupported snapshot version {version} (expected {VERSION})")
    buf = memoryview(data)
    off = _HEADER.size
    snap_id, timestamp = struct.unpack_from("<qd", data, off)
    off += struct.calcsize("<qd")

    x, off = _arr(buf, off, "<f8", (np_, 3))
    v, off = _arr(buf, off, "<f8", (np_, 3))
    m, off = _arr(buf, off, "<f8", (np_,))
    vol0, off = _arr(buf, off, "<f8", (np_,))
    F, off = _arr(buf, off, "<f8", (np_, 3, 3))
    C, off = _arr(buf, off, "<f8", (np_, 3, 3))
    mat, off = _arr(buf, off, "<i4", (np_,))
    cat, off = _arr(buf, off, "<i4", (np_,))
    act, off = _arr(buf, off, "u1", (np_,))
    particles = ParticleSet(x=x, v=v, m=m, vol0=vol0, F=F, C=C,
                            material_id=mat, category_id=cat, active=act.astype(bool))

    (payload_k,) = struct.unpack_from("<I", data, off)
    off += 4
    ax, off = _arr(buf, off, "<f8", (na, 3))
    av, off = _arr(buf, off, "<f8", (na, 3))
    aC, off = _arr(buf, off, "<f8", (na, 3, 3))
    aF, off = _arr(buf, off, "<f8", (na, 3, 3))
    cov0, off = _arr(buf, off, "<f8", (na, 3, 3))
    cov, off = _arr(buf, off, "<f8", (na, 3, 3))
    payload, off = _arr(buf, off, "<f4", (na, payload_k))
    amat, off = _arr(buf, off, "<i4", (na,))
    acat, off = _arr(buf, off, "<i4", (na,))
    aact, off = _arr(buf, off, "u1", (na,))
    appearance = AppearanceSet(x=ax, v=av, C=aC, F=aF, cov0=cov0, cov=cov,
                               payload=payload, material_id=amat, category_id=acat,
                               active=aact.astype(bool))

    (blob_len,) = struct.unpack_from("<I", data, off)
    off += 4
    objects = {int(k): list(v) for k, v in
               json.loads(bytes(buf[off:off + blob_len]).decode()).items()}
    return Snapshot(snapshot_id=snap_id, timestamp=timestamp, particles=particles,
                    appearance=appearance, objects=objects)


def take_snapshot(sim, snapshot_id: int, timestamp: float) -> Snapshot:
    return Snapshot(
        snapshot_id=snapshot_id, timestamp=timestamp,
        particles=sim.particles.copy(), appearance=sim.appearance.copy(),
        objects={k: list(v) for k, v in sim.objects.items()},
    )


def restore_snapshot(sim, snap: Snapshot) -> None:
    sim.particles = snap.particles.copy()
    sim.appearance = snap.appearance.copy()
    sim.objects = {k: list(v) for k, v in snap.objects.items()}
    cats = [c for v in sim.objects.values() for c in v]
    sim.next_object_id = max(sim.objects, default=-1) + 1
    sim.next_category_id = max(cats, default=-1) + 1
    sim.region = None
    sim.force_field = None


def save_snapshot_file(snap: Snapshot, path: str | Path) -> None:
    Path(path).write_bytes(serialize_snapshot(snap))


def load_snapshot_file(path: str | Path) -> Snapshot:
    return deserialize_snapshot(Path(path).read_bytes())
