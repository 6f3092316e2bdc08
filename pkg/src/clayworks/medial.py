"""Medial primitives for hands and tools, plus the spatial hash.

A rig is a set of spheres bound to named joints; primitives interpolate
one sphere (sphere), two (cone) or three (slab). The signed distance to
a primitive is the minimum over its interpolated spheres, solved in
closed form (see kernels._primitive_query); the world SDF is the
minimum over all primitives, accelerated by a hash over inflated
primitive bounding boxes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels

KIND_TO_TAG = {"sphere": kernels.PRIM_SPHERE, "cone": kernels.PRIM_CONE,
               "slab": kernels.PRIM_SLAB}
KIND_SPHERES = {"sphere": 1, "cone": 2, "slab": 3}

RIG_SCHEMA_VERSION = 1


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector(s) v by unit quaternion q = (x, y, z, w)."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    u, w = q[:3], q[3]
    return v + 2.0 * np.cross(u, np.cross(u, v) + w * v)


@dataclass
class SdfQueryResult:
    distance: float
    normal: np.ndarray         # outward unit normal (zero if nothing found)
    closest_point: np.ndarray
    velocity: np.ndarray       # boundary velocity at the closest point
    primitive: int             # index into the packed primitive list, -1 if none

    @property
    def found(self) -> bool:
        return self.primitive >= 0


@dataclass
class RigSphere:
    joint: str
    offset: tuple[float, float, float]
    radius: float


@dataclass
class RigPrimitive:
    kind: str                  # sphere | cone | slab
    spheres: tuple[int, ...]   # indices into the rig sphere list

    def __post_init__(self):
        if self.kind not in KIND_SPHERES:
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        if len(self.spheres) != KIND_SPHERES[self.kind]:
            raise ValueError(
                f"{self.kind} needs {KIND_SPHERES[self.kind]} spheres, got {len(self.spheres)}")


@dataclass
class MedialRig:
    """A posable set of medial primitives.

    `centers` / `velocities` hold the current posed sphere state; calling
    pose() with a joint map updates them and derives per-sphere velocities
    from the frame delta.
    """

    name: str
    joints: dict[str, np.ndarray]          # rest positions
    spheres: list[RigSphere]
    primitives: list[RigPrimitive]
    centers: np.ndarray = field(default=None)     # (S, 3)
    velocities: np.ndarray = field(default=None)  # (S, 3)

    def __post_init__(self):
        for s in self.spheres:
            if s.radius <= 0:
                raise ValueError(f"rig {self.name!r}: sphere radius must be > 0")
            if s.joint not in self.joints:
                raise KeyError(f"rig {self.name!r}: unknown joint {s.joint!r}")
        for prim in self.primitives:
            pts = [np.asarray(self.joints[self.spheres[i].joint]) + self.spheres[i].offset
                   for i in prim.spheres]
            for a in range(len(pts)):
                for b in range(a + 1, len(pts)):
                    if np.allclose(pts[a], pts[b]):
                        raise ValueError(
                            f"rig {self.name!r}: {prim.kind} control spheres coincide")
        self._explicitly_posed = False
        if self.centers is None:
            self.pose({j: (p, None) for j, p in self.joints.items()}, frame_dt=None)
            self._explicitly_posed = False  # rest placement carries no motion

    @property
    def sphere_count(self) -> int:
        return len(self.spheres)

    def pose(self, joint_map: dict, frame_dt: float | None) -> None:
        """Pose all spheres from joints; joint_map values are either a
        position or a (position, quaternion) pair.

        Per-sphere velocities are the frame delta divided by frame_dt;
        the first explicit pose (and frame_dt=None) always gives zero
        velocities, so a freshly built rig never reports a teleport from
        its authoring-space rest placement as motion.
        """
        new = np.empty((len(self.spheres), 3))
        for i, s in enumerate(self.spheres):
            if s.joint not in joint_map:
                raise KeyError(f"rig {self.name!r}: pose missing joint {s.joint!r}")
            entry = joint_map[s.joint]
            if isinstance(entry, tuple) and len(entry) == 2:
                pos, quat = entry
            else:
                pos, quat = entry, None
            off = np.asarray(s.offset, dtype=np.float64)
            if quat is not None:
                off = quat_rotate(quat, off)
            new[i] = np.asarray(pos, dtype=np.float64) + off
        if (frame_dt is not None and frame_dt > 0 and self.centers is not None
                and self._explicitly_posed):
            self.velocities = (new - self.centers) / frame_dt
        else:
            self.velocities = np.zeros_like(new)
        self.centers = new
        self._explicitly_posed = True

    def translate(self, offset, velocity=None) -> None:
        """Rigidly shift the current pose (handy for scripted tools)."""
        self.centers = self.centers + np.asarray(offset, dtype=np.float64)
        if velocity is not None:
            self.velocities = np.broadcast_to(
                np.asarray(velocity, dtype=np.float64), self.centers.shape).copy()

    def centroid(self) -> np.ndarray:
        return self.centers.mean(axis=0)


@dataclass
class PackedPrimitives:
    """Flat primitive arrays shared with the numba kernels."""

    ptype: np.ndarray    # (P,) int32
    centers: np.ndarray  # (P, 3, 3)
    radii: np.ndarray    # (P, 3)
    velocities: np.ndarray  # (P, 3, 3)

    @property
    def count(self) -> int:
        return self.ptype.shape[0]

    @classmethod
    def empty(cls) -> "PackedPrimitives":
        return cls(np.zeros(0, dtype=np.int32), np.zeros((0, 3, 3)),
                   np.zeros((0, 3)), np.zeros((0, 3, 3)))

    def sphere_counts(self) -> np.ndarray:
        counts = np.ones(self.count, dtype=np.int64)
        counts[self.ptype == kernels.PRIM_CONE] = 2
        counts[self.ptype == kernels.PRIM_SLAB] = 3
        return counts

    def aabbs(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-primitive bounds of the union of control spheres."""
        lo = np.full((self.count, 3), np.inf)
        hi = np.full((self.count, 3), -np.inf)
        ns = self.sphere_counts()
        for s in range(3):
            mask = ns > s
            if not np.any(mask):
                continue
            c = self.centers[mask, s, :]
            r = self.radii[mask, s][:, None]
            lo[mask] = np.minimum(lo[mask], c - r)
            hi[mask] = np.maximum(hi[mask], c + r)
        return lo, hi


def pack_rigs(rigs: list[MedialRig]) -> PackedPrimitives:
    rows = []
    for rig in rigs:
        for prim in rig.primitives:
            cent = np.zeros((3, 3))
            rad = np.zeros(3)
            vel = np.zeros((3, 3))
            for slot, si in enumerate(prim.spheres):
                cent[slot] = rig.centers[si]
                rad[slot] = rig.spheres[si].radius
                vel[slot] = rig.velocities[si]
            rows.append((KIND_TO_TAG[prim.kind], cent, rad, vel))
    if not rows:
        return PackedPrimitives.empty()
    return PackedPrimitives(
        ptype=np.array([r[0] for r in rows], dtype=np.int32),
        centers=np.stack([r[1] for r in rows]),
        radii=np.stack([r[2] for r in rows]),
        velocities=np.stack([r[3] for r in rows]),
    )


@dataclass
class SpatialHash:
    """Uniform hash over primitive AABBs inflated by one grid spacing.

    Cell size is the largest inflated AABB extent, so any point within the
    inflation margin of a primitive finds it in its own cell; queries scan
    the 3^3 neighborhood for extra reach. Exact for every query whose true
    distance is <= the inflation margin (in particular all penetrations).
    """

    cell_size: float
    n: int
    cell_start: np.ndarray  # (n^3 + 1,) int64
    items: np.ndarray       # int32 primitive indices

    @classmethod
    def build(cls, packed: PackedPrimitives, domain: float, inflate: float) -> "SpatialHash":
        if packed.count == 0:
            return cls(cell_size=max(domain, 1e-9), n=1,
                       cell_start=np.zeros(2, dtype=np.int64),
                       items=np.zeros(0, dtype=np.int32))
        lo, hi = packed.aabbs()
        lo = lo - inflate
        hi = hi + inflate
        h = float(np.max(hi - lo))
        h = max(h, inflate, 1e-6)
        n = max(1, int(math.ceil(domain / h)))
        clo = np.clip(np.floor(lo / h).astype(np.int64), 0, n - 1)
        chi = np.clip(np.floor(hi / h).astype(np.int64), 0, n - 1)
        cells = []
        items = []
        for p in range(packed.count):
            for i in range(clo[p, 0], chi[p, 0] + 1):
                for j in range(clo[p, 1], chi[p, 1] + 1):
                    for k in range(clo[p, 2], chi[p, 2] + 1):
                        cells.append((i * n + j) * n + k)
                        items.append(p)
        cells = np.asarray(cells, dtype=np.int64)
        items = np.asarray(items, dtype=np.int32)
        order = np.lexsort((items, cells))
        cells = cells[order]
        items = items[order]
        counts = np.bincount(cells, minlength=n**3)
        cell_start = np.zeros(n**3 + 1, dtype=np.int64)
        np.cumsum(counts, out=cell_start[1:])
        return cls(cell_size=h, n=n, cell_start=cell_start, items=items)


class ContactWorld:
    """Posed rigs packed for queries; rebuild once per frame."""

    def __init__(self, rigs: list[MedialRig], domain: float, inflate: float):
        self.rigs = rigs
        self.domain = domain
        self.inflate = inflate
        self.packed = pack_rigs(rigs)
        self.hash = SpatialHash.build(self.packed, domain, inflate)
        if self.packed.count:
            lo, hi = self.packed.aabbs()
            self.bounds_lo = lo.min(axis=0) - inflate
            self.bounds_hi = hi.max(axis=0) + inflate
        else:
            self.bounds_lo = np.zeros(3)
            self.bounds_hi = np.zeros(3)

    @property
    def empty(self) -> bool:
        return self.packed.count == 0

    def query(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Batch world SDF: (d, normal, boundary velocity, primitive index)."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        m = pts.shape[0]
        d = np.empty(m)
        nrm = np.empty((m, 3))
        vel = np.empty((m, 3))
        idx = np.empty(m, dtype=np.int64)
        if self.empty:
            d[:] = np.inf
            nrm[:] = 0.0
            vel[:] = 0.0
            idx[:] = -1
        else:
            kernels.query_points(pts, self.packed.ptype, self.packed.centers,
                                 self.packed.radii, self.packed.velocities,
                                 self.hash.cell_start, self.hash.items,
                                 self.hash.n, self.hash.cell_size, d, nrm, vel, idx)
        return d, nrm, vel, idx

    def query_exhaustive(self, points: np.ndarray):
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        m = pts.shape[0]
        d = np.empty(m)
        nrm = np.empty((m, 3))
        vel = np.empty((m, 3))
        idx = np.empty(m, dtype=np.int64)
        if self.empty:
            d[:] = np.inf
            nrm[:] = 0.0
            vel[:] = 0.0
            idx[:] = -1
        else:
            kernels.query_points_exhaustive(
                pts, self.packed.ptype, self.packed.centers,
                self.packed.radii, self.packed.velocities, d, nrm, vel, idx)
        return d, nrm, vel, idx


def primitive_sdf(point, kind: str, spheres: list[tuple], velocities=None) -> SdfQueryResult:
    """Query a single primitive given [(center, radius), ...] control spheres."""
    tag = KIND_TO_TAG[kind]
    if len(spheres) != KIND_SPHERES[kind]:
        raise ValueError(f"{kind} needs {KIND_SPHERES[kind]} control spheres")
    cent = np.zeros((3, 3))
    rad = np.zeros(3)
    vel = np.zeros((3, 3))
    for i, (c, r) in enumerate(spheres):
        cent[i] = np.asarray(c, dtype=np.float64)
        rad[i] = r
        if velocities is not None:
            vel[i] = np.asarray(velocities[i], dtype=np.float64)
    p = np.asarray(point, dtype=np.float64)
    d, nx, ny, nz, w0, w1, w2 = kernels._primitive_query(p[0], p[1], p[2], tag, cent, rad, vel)
    n = np.array([nx, ny, nz])
    v = w0 * vel[0] + w1 * vel[1] + w2 * vel[2]
    return SdfQueryResult(distance=float(d), normal=n, closest_point=p - d * n,
                          velocity=v, primitive=0)


def world_sdf(point, world: ContactWorld) -> SdfQueryResult:
    d, nrm, vel, idx = world.query(np.asarray(point, dtype=np.float64)[None, :])
    p = np.asarray(point, dtype=np.float64)
    if idx[0] < 0:
        return SdfQueryResult(distance=float("inf"), normal=np.zeros(3),
                              closest_point=p.copy(), velocity=np.zeros(3), primitive=-1)
    return SdfQueryResult(distance=float(d[0]), normal=nrm[0],
                          closest_point=p - d[0] * nrm[0], velocity=vel[0],
                          primitive=int(idx[0]))


# ---------------------------------------------------------------------------
# rig description files

def rig_to_dict(rig: MedialRig) -> dict:
    return {
        "schema_version": RIG_SCHEMA_VERSION,
        "name": rig.name,
        "joints": [{"name": j, "rest_position": list(map(float, p))}
                   for j, p in rig.joints.items()],
        "spheres": [{"joint": s.joint, "offset": list(map(float, s.offset)),
                     "radius": s.radius} for s in rig.spheres],
        "primitives": [{"kind": p.kind, "spheres": list(p.spheres)} for p in rig.primitives],
    }


def rig_from_dict(doc: dict) -> MedialRig:
    if doc.get("schema_version", 1) != RIG_SCHEMA_VERSION:
        raise ValueError(f"unsupported rig schema_version {doc.get('schema_version')}")
    joints = {j["name"]: np.asarray(j["rest_position"], dtype=np.float64)
              for j in doc["joints"]}
    spheres = [RigSphere(joint=s["joint"], offset=tuple(s["offset"]), radius=s["radius"])
               for s in doc["spheres"]]
    prims = [RigPrimitive(kind=p["kind"], spheres=tuple(p["spheres"]))
             for p in doc["primitives"]]
    return MedialRig(name=doc["name"], joints=joints, spheres=spheres, primitives=prims)


def save_rig(rig: MedialRig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(rig_to_dict(rig), indent=2))


def load_rig(path: str | Path) -> MedialRig:
    return rig_from_dict(json.loads(Path(path).read_text()))
