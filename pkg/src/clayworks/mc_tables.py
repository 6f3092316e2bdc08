"""Marching-cubes case table, generated by contour tracing.

For each of the 256 corner sign configurations the isosurface crossings
are paired into directed segments on every cube face (walking the face
boundary counter-clockwise as seen from outside the cube, each segment
runs from an inside-to-outside crossing to the next outside-to-inside
crossing). Every crossed edge then has exactly one incoming and one
outgoing segment, so the segments close into directed polygons.

Pairing depends only on the four corner states of a face, so adjacent
cells always agree on the shared face and the extracted surface is
watertight. Polygons are fan-triangulated unless they contain two
non-adjacent vertices lying on a common face: a fan chord there could
coincide with an edge built by the neighboring cell and break edge
manifoldness, so such polygons are triangulated around an added
center vertex instead (ids >= 12 reference the polygon centroid).
Triangles wind counter-clockwise seen from outside the material.
"""

from __future__ import annotations

import numpy as np

# corner numbering: bit c set means corner c is above the iso level
CORNERS = np.array([
    (0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
    (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1),
], dtype=np.int64)

EDGE_CORNERS = [
    (0, 1), (1, 2), (2, 3), (3, 0),
    (4, 5), (5, 6), (6, 7), (7, 4),
    (0, 4), (1, 5), (2, 6), (3, 7),
]

# grid edge identity of each cube edge: (node offset, axis)
EDGE_OFFSET_AXIS = []
for _a, _b in EDGE_CORNERS:
    _pa, _pb = CORNERS[_a], CORNERS[_b]
    _axis = int(np.nonzero(_pa != _pb)[0][0])
    EDGE_OFFSET_AXIS.append((np.minimum(_pa, _pb).copy(), _axis))

_EDGE_OF_PAIR = {frozenset(p): i for i, p in enumerate(EDGE_CORNERS)}

MAX_TRIS = 16
MAX_CYCLES = 4
MAX_CYCLE_LEN = 12
CENTROID_BASE = 12  # triangle ids >= this reference cycle centroids


def _face_cycles() -> list[list[int]]:
    """Corner cycles of the 6 faces, counter-clockwise from outside."""
    cycles = []
    for axis in range(3):
        for side in (0, 1):
            ids = [c for c in range(8) if CORNERS[c][axis] == side]
            normal = np.zeros(3)
            normal[axis] = 1.0 if side == 1 else -1.0
            u = np.zeros(3)
            v = np.zeros(3)
            u[(axis + 1) % 3] = 1.0
            v[(axis + 2) % 3] = 1.0
            if side == 0:
                u, v = v, u  # keep u x v == outward normal
            center = CORNERS[ids].mean(axis=0)
            ang = [np.arctan2(float(np.dot(CORNERS[c] - center, v)),
                              float(np.dot(CORNERS[c] - center, u))) for c in ids]
            cyc = [c for _, c in sorted(zip(ang, ids))]
            p = CORNERS[cyc].astype(float)
            area = np.zeros(3)
            for i in range(4):
                area += np.cross(p[i], p[(i + 1) % 4])
            assert np.dot(area, normal) > 0
            cycles.append(cyc)
    return cycles


_FACES = _face_cycles()

# faces touching each cube edge (both endpoints on the face)
_EDGE_FACES = [frozenset(fi for fi, f in enumerate(_FACES) if a in f and b in f)
               for a, b in EDGE_CORNERS]
assert all(len(fs) == 2 for fs in _EDGE_FACES)


def _config_cycles(config: int) -> list[list[int]]:
    inside = [(config >> c) & 1 for c in range(8)]
    succ: dict[int, int] = {}
    for cyc in _FACES:
        crossings = []  # (edge id, True if inside->outside along the walk)
        for i in range(4):
            a, b = cyc[i], cyc[(i + 1) % 4]
            if inside[a] != inside[b]:
                crossings.append((_EDGE_OF_PAIR[frozenset((a, b))], bool(inside[a])))
        for idx, (edge, outgoing) in enumerate(crossings):
            if not outgoing:
                continue
            for step in range(1, len(crossings) + 1):
                nxt = crossings[(idx + step) % len(crossings)]
                if not nxt[1]:
                    succ[edge] = nxt[0]
                    break
    cycles: list[list[int]] = []
    seen: set[int] = set()
    for start in list(succ):
        if start in seen:
            continue
        cycle = [start]
        seen.add(start)
        cur = succ[start]
        while cur != start:
            cycle.append(cur)
            seen.add(cur)
            cur = succ[cur]
        cycles.append(cycle)
    return cycles


def _needs_centroid(cycle: list[int]) -> bool:
    """True when two non-adjacent cycle vertices share a cube face (a fan
    chord between them could be duplicated by the neighbor behind that face)."""
    k = len(cycle)
    if k <= 3:
        return False
    for i in range(k):
        for j in range(i + 2, k):
            if i == 0 and j == k - 1:
                continue  # adjacent around the cycle
            if _EDGE_FACES[cycle[i]] & _EDGE_FACES[cycle[j]]:
                return True
    return False


def build_tables():
    """Returns (tri_count, tri_ids, cycle_count, cycle_edges, cycle_len).

    tri_ids (256, MAX_TRIS, 3): vertex ids per triangle, -1 padded; ids
    < 12 are cube edges, 12 + c is the centroid of cycle c. cycle_edges
    (256, MAX_CYCLES, MAX_CYCLE_LEN) lists each cycle's edges (-1 padded)
    for centroid placement.
    """
    tri_count = np.zeros(256, dtype=np.int64)
    tri_ids = np.full((256, MAX_TRIS, 3), -1, dtype=np.int64)
    cycle_count = np.zeros(256, dtype=np.int64)
    cycle_edges = np.full((256, MAX_CYCLES, MAX_CYCLE_LEN), -1, dtype=np.int64)
    cycle_len = np.zeros((256, MAX_CYCLES), dtype=np.int64)
    for config in range(256):
        cycles = _config_cycles(config)
        assert len(cycles) <= MAX_CYCLES
        tris: list[tuple[int, int, int]] = []
        for ci, cycle in enumerate(cycles):
            assert len(cycle) <= MAX_CYCLE_LEN
            cycle_edges[config, ci, :len(cycle)] = cycle
            cycle_len[config, ci] = len(cycle)
            k = len(cycle)
            # reversed winding: right-hand normals point away from material
            if _needs_centroid(cycle):
                c = CENTROID_BASE + ci
                for i in range(k):
                    tris.append((c, cycle[(i + 1) % k], cycle[i]))
            else:
                for i in range(1, k - 1):
                    tris.append((cycle[0], cycle[i + 1], cycle[i]))
        cycle_count[config] = len(cycles)
        assert len(tris) <= MAX_TRIS
        tri_count[config] = len(tris)
        for t, tri in enumerate(tris):
            tri_ids[config, t] = tri
    return tri_count, tri_ids, cycle_count, cycle_edges, cycle_len


TRI_COUNT, TRI_IDS, CYCLE_COUNT, CYCLE_EDGES, CYCLE_LEN = build_tables()
