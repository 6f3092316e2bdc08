"""Particle seeding from analytic scene shapes.

Every grid cell overlapping a shape's bounding box receives
particles_per_cell jittered candidate positions; candidates falling
inside the shape become particles. Jitter comes from the counter-based
PRNG keyed by (seed, cell index, sample index), so seeding is a pure
function of (config, seed) regardless of thread count or platform.
"""

from __future__ import annotations

import numpy as np

from . import prng
from .config import SceneConfig
from .types import ParticleSet


def seed_particles(config: SceneConfig) -> ParticleSet:
    n = config.grid_resolution
    dx = config.dx
    ppc = config.particles_per_cell
    vol0 = dx**3 / ppc
    materials = config.material_params()

    parts: list[ParticleSet] = []
    for shape_idx, shape in enumerate(config.shapes):
        lo, hi = shape.aabb()
        clo = np.maximum(np.floor(lo / dx).astype(np.int64), 0)
        chi = np.minimum(np.ceil(hi / dx).astype(np.int64), n - 1)
        if np.any(chi < clo):
            continue
        ci, cj, ck = [np.arange(clo[a], chi[a] + 1) for a in range(3)]
        cells = np.stack(np.meshgrid(ci, cj, ck, indexing="ij"), axis=-1).reshape(-1, 3)
        flat = (cells[:, 0] * n + cells[:, 1]) * n + cells[:, 2]

        # (cells, ppc, 3) jitter in [0, 1)
        cell_key = np.repeat(flat, ppc)
        sample_key = np.tile(np.arange(ppc, dtype=np.int64), len(flat))
        u = np.stack(
            [prng.uniform01(config.seed, cell_key, sample_key, axis) for axis in range(3)],
            axis=-1,
        ).reshape(len(flat), ppc, 3)
        pos = (cells[:, None, :] + u) * dx
        pos = pos.reshape(-1, 3)
        keep = shape.contains(pos)
        pos = pos[keep]
        if pos.shape[0] == 0:
            continue

        p = ParticleSet.allocate(pos.shape[0])
        p.x[:] = pos
        p.v[:] = np.asarray(shape.velocity)
        mat_idx = config.material_index(shape.material)
        p.m[:] = materials[mat_idx].density * vol0
        p.vol0[:] = vol0
        p.material_id[:] = mat_idx
        p.category_id[:] = shape.category
        parts.append(p)

    if not parts:
        return ParticleSet.empty()
    out = parts[0]
    for p in parts[1:]:
        out = out.append(p)
    return out
