"""MLS-MPM substep execution and localized simulation.

Each substep runs five phases in order: particle-to-grid (including the
trial deformation-gradient update and fused stress), grid velocity
update (gravity, damping, gesture impulses, tool contact, walls),
grid-to-particle, particle-level boundary projection, and the plastic
return map. With an active region only in-region particles and cells
participate; everything outside stays frozen.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .config import SceneConfig
from .medial import ContactWorld, MedialRig
from .seeding import seed_particles
from .types import AppearanceSet, BoundaryKind, Grid, ParticleSet, material_table_arrays

PHASES = ("p2g", "grid", "g2p", "adjust", "plasticity")

_BOUNDARY = {"none": BoundaryKind.NONE, "slip": BoundaryKind.SLIP, "sticky": BoundaryKind.STICKY}


class EngineError(RuntimeError):
    def __init__(self, phase: str, message: str):
        super().__init__(f"[{phase}] {message}")
        self.phase = phase


@dataclass
class ActiveRegion:
    """Cubic simulation window, clamped inside the domain."""

    center: np.ndarray
    half_side: float
    lo: np.ndarray  # inclusive node index per axis
    hi: np.ndarray  # exclusive

    @classmethod
    def around(cls, center: np.ndarray, half_side: float, n: int, dx: float,
               domain: float) -> "ActiveRegion":
        h = min(float(half_side), 0.5 * domain)
        c = np.clip(np.asarray(center, dtype=np.float64), h, domain - h)
        lo = np.clip(np.floor((c - h) / dx).astype(np.int64), 0, n - 1)
        hi = np.clip(np.ceil((c + h) / dx).astype(np.int64) + 1, 1, n)
        return cls(center=c, half_side=h, lo=lo, hi=hi)

    def contains(self, x: np.ndarray) -> np.ndarray:
        return np.all((x >= self.center - self.half_side)
                      & (x <= self.center + self.half_side), axis=-1)


@dataclass
class ForceField:
    """Sparse per-particle external forces (gesture stretch/twist)."""

    center: np.ndarray
    radius: float
    indices: np.ndarray   # (K,) int64 particle indices
    forces: np.ndarray    # (K, 3)


@dataclass
class SubstepStats:
    adjusted: int = 0
    pre_fix_depth: float = 0.0
    clamped: int = 0


def project_pruned(world: ContactWorld, x: np.ndarray, v: np.ndarray,
                   active: np.ndarray, clamp_lo: float, clamp_hi: float,
                   rounds: int = 4) -> tuple[int, float]:
    """Boundary-project only points inside the inflated rig bounding box;
    anything outside it cannot penetrate."""
    cand = active & np.all((x >= world.bounds_lo) & (x <= world.bounds_hi), axis=1)
    if not np.any(cand):
        return 0, 0.0
    return kernels.project_particles(
        x, v, cand, world.packed.ptype, world.packed.centers,
        world.packed.radii, world.packed.velocities,
        world.hash.cell_start, world.hash.items, world.hash.n,
        world.hash.cell_size, clamp_lo, clamp_hi, rounds)


class Simulation:
    """Owns particle/grid state and advances it one substep at a time.

    Not thread-safe: one writer at a time, by construction of the callers
    (offline replay or the session frame loop).
    """

    def __init__(self, config: SceneConfig, particles: ParticleSet | None = None,
                 appearance: AppearanceSet | None = None):
        self.config = config
        self.particles = particles if particles is not None else seed_particles(config)
        self.appearance = appearance if appearance is not None else AppearanceSet.empty()
        self.grid = Grid.allocate(config.grid_resolution, config.domain_size)
        self.materials = config.material_params()
        self.mat = material_table_arrays(self.materials)
        self.dt = config.effective_dt()
        self.boundary = _BOUNDARY[config.boundary]
        self.time = 0.0
        self.substeps_done = 0
        self.clamp_warnings = 0
        self.region: ActiveRegion | None = None
        self.force_field: ForceField | None = None
        self.phase_seconds: dict[str, float] = {p: 0.0 for p in PHASES}
        self.last_stats = SubstepStats()
        # particle positions must keep the full 3x3x3 stencil in the grid
        self.clamp_lo = self.grid.dx
        self.clamp_hi = (self.grid.n - 2) * self.grid.dx
        # logical objects: object id -> category ids (seeded one per category)
        cats = sorted(int(c) for c in np.unique(self.particles.category_id)) \
            if self.particles.count else []
        self.objects: dict[int, list[int]] = {i: [c] for i, c in enumerate(cats)}
        self.next_object_id = len(cats)
        self.next_category_id = (max(cats) + 1) if cats else 0

    # ------------------------------------------------------------------
    # localized simulation

    def update_active_region(self, rigs: list[MedialRig]) -> ActiveRegion | None:
        """Center the region on the rig sphere centroid; reactivate particles
        that entered and freeze the ones that left."""
        if not self.config.localized.enabled or not rigs:
            return self.region
        centers = np.concatenate([r.centers for r in rigs], axis=0)
        region = ActiveRegion.around(centers.mean(axis=0), self.config.localized.half_side,
                                     self.grid.n, self.grid.dx, self.config.domain_size)
        self.set_region(region)
        return region

    def set_region(self, region: ActiveRegion | None) -> None:
        self.region = region
        p = self.particles
        if region is None:
            p.active[:] = True
            return
        inside = region.contains(p.x)
        leaving = p.active & ~inside
        # frozen particles hold position with zero velocity; C is cleared so
        # a stale gradient cannot warp F on reactivation
        p.v[leaving] = 0.0
        p.C[leaving] = 0.0
        p.active[:] = inside
        if self.appearance.count:
            a_inside = region.contains(self.appearance.x)
            a_leaving = self.appearance.active & ~a_inside
            self.appearance.v[a_leaving] = 0.0
            self.appearance.C[a_leaving] = 0.0
            self.appearance.active[:] = a_inside

    def _bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if self.region is None:
            return (np.zeros(3, dtype=np.int64),
                    np.full(3, self.grid.n, dtype=np.int64))
        return self.region.lo, self.region.hi

    # ------------------------------------------------------------------
    # substep phases

    def substep(self, world: ContactWorld | None = None,
                advect_appearance: bool = True) -> SubstepStats:
        stats = SubstepStats()
        p = self.particles
        g = self.grid
        dt = self.dt

        t0 = time.perf_counter()
        g.clear()
        if p.count:
            err = np.zeros(2, dtype=np.int64)
            kernels.update_deformation(p.F, p.C, p.active, dt, err)
            if err[0]:
                raise EngineError("p2g", f"particle {err[1]}: deformation gradient "
                                  f"inverted or non-finite, F={p.F[err[1]]}")
            kernels.p2g(p.x, p.v, p.C, p.F, p.m, p.vol0, p.material_id,
                        self.mat["mu"], self.mat["lam"], self.mat["stress_model"],
                        p.active, g.mass, g.momentum, g.dx, dt, err)
            if err[0]:
                raise EngineError("p2g", f"particle {err[1]}: non-finite stress, "
                                  f"F={p.F[err[1]]}")
        t1 = time.perf_counter()
        self.phase_seconds["p2g"] += t1 - t0

        self._update_grid(world)
        t2 = time.perf_counter()
        self.phase_seconds["grid"] += t2 - t1

        if p.count:
            clamped = kernels.g2p(p.x, p.v, p.C, g.velocity, p.active, g.dx, dt,
                                  self.clamp_lo, self.clamp_hi)
            stats.clamped = int(clamped)
            self.clamp_warnings += stats.clamped
        t3 = time.perf_counter()
        self.phase_seconds["g2p"] += t3 - t2

        if world is not None and not world.empty and p.count:
            adjusted, depth = project_pruned(world, p.x, p.v, p.active,
                                             self.clamp_lo, self.clamp_hi)
            stats.adjusted = int(adjusted)
            stats.pre_fix_depth = float(depth)
        t4 = time.perf_counter()
        self.phase_seconds["adjust"] += t4 - t3

        if p.count:
            kernels.apply_plasticity_batch(
                p.F, p.material_id, self.mat["plasticity"], self.mat["mu"],
                self.mat["lam"], self.mat["dp_alpha"], self.mat["tau_y"],
                self.mat["clamp_min"], self.mat["clamp_max"], p.active)
        t5 = time.perf_counter()
        self.phase_seconds["plasticity"] += t5 - t4

        if advect_appearance and self.appearance.count:
            from .appearance import advect_appearance as _advect
            _advect(self, world)

        self.time += dt
        self.substeps_done += 1
        self.last_stats = stats
        return stats

    def _update_grid(self, world: ContactWorld | None) -> None:
        g = self.grid
        dt = self.dt
        n = g.n
        if self.force_field is not None and self.force_field.indices.size:
            kernels.scatter_impulses(self.particles.x, self.force_field.forces,
                                     self.force_field.indices, g.momentum, g.dx, dt)
        lo, hi = self._bounds()
        sl = (slice(lo[0], hi[0]), slice(lo[1], hi[1]), slice(lo[2], hi[2]))
        mass = g.mass[sl]
        has = mass > 0.0
        v = np.zeros(mass.shape + (3,))
        np.divide(g.momentum[sl], mass[..., None], out=v, where=has[..., None])

        gravity = np.asarray(self.config.gravity)
        if np.any(gravity):
            v[has] += dt * gravity
        if self.config.damping > 0.0:
            v[has] *= max(0.0, 1.0 - self.config.damping * dt)

        if world is not None and not world.empty:
            # nodes outside every inflated primitive AABB cannot penetrate;
            # only evaluate the SDF on the overlap of the region with them
            plo, phi = world.packed.aabbs()
            blo = np.maximum(np.floor((plo.min(axis=0) - world.inflate) / g.dx), lo).astype(np.int64)
            bhi = np.minimum(np.ceil((phi.max(axis=0) + world.inflate) / g.dx) + 1, hi).astype(np.int64)
            if np.all(bhi > blo):
                shape = tuple(int(bhi[a] - blo[a]) for a in range(3))
                sdf = np.empty(shape)
                nrm = np.empty(shape + (3,))
                vb = np.empty(shape + (3,))
                kernels.eval_sdf_region(blo[0], blo[1], blo[2], bhi[0], bhi[1], bhi[2],
                                        g.dx, world.packed.ptype, world.packed.centers,
                                        world.packed.radii, world.packed.velocities,
                                        world.hash.cell_start, world.hash.items,
                                        world.hash.n, world.hash.cell_size, sdf, nrm, vb)
                sub = tuple(slice(int(blo[a] - lo[a]), int(bhi[a] - lo[a])) for a in range(3))
                vbox = v[sub]
                pen = has[sub] & (sdf < 0.0)
                if np.any(pen):
                    depth = -sdf[pen]
                    normal = nrm[pen]
                    dv = (self.config.contact.pressure_stiffness * depth * dt)
                    rel = vbox[pen] - vb[pen]
                    vn = np.sum(rel * normal, axis=1)
                    vt = rel - vn[:, None] * normal
                    st = np.linalg.norm(vt, axis=1)
                    fric = np.minimum(self.config.contact.friction * dv, st)
                    tangent = np.divide(vt, st[:, None], out=np.zeros_like(vt),
                                        where=st[:, None] > 1e-14)
                    vbox[pen] += dv[:, None] * normal - fric[:, None] * tangent

        bound = self.config.wall_thickness
        if self.boundary != BoundaryKind.NONE and bound > 0:
            idx = [np.arange(lo[a], hi[a]) for a in range(3)]
            outward = np.zeros(v.shape, dtype=bool)
            for a in range(3):
                shape = [1, 1, 1]
                shape[a] = idx[a].size
                low = (idx[a] < bound).reshape(shape)
                high = (idx[a] > n - 1 - bound).reshape(shape)
                outward[..., a] = (low & (v[..., a] < 0.0)) | (high & (v[..., a] > 0.0))
            if self.boundary == BoundaryKind.SLIP:
                v[outward] = 0.0
            else:  # sticky: any outward component pins the whole node
                v[np.any(outward, axis=-1)] = 0.0

        # CFL guard: one substep never moves material further than half a cell
        v_allowed = 0.5 * g.dx / dt
        np.clip(v, -v_allowed, v_allowed, out=v)

        if self.region is not None:
            # region border is sticky; faces on the domain boundary are
            # already handled by the wall rules above
            if lo[0] > 0:
                v[0, :, :] = 0.0
            if hi[0] < n:
                v[-1, :, :] = 0.0
            if lo[1] > 0:
                v[:, 0, :] = 0.0
            if hi[1] < n:
                v[:, -1, :] = 0.0
            if lo[2] > 0:
                v[:, :, 0] = 0.0
            if hi[2] < n:
                v[:, :, -1] = 0.0

        g.velocity[sl] = v

    # ------------------------------------------------------------------
    # live material editing

    def set_object_material(self, object_id: int, changes: dict) -> int:
        """Adjust material parameters for one object's particles.

        The object's material entry is cloned first when other particles
        share it, so tweaking one object never changes another. Returns the
        material index now in effect.
        """
        if object_id not in self.objects:
            raise KeyError(f"unknown object id {object_id}")
        mask = np.isin(self.particles.category_id, self.objects[object_id])
        if not np.any(mask):
            raise KeyError(f"object {object_id} has no particles")
        ids = np.unique(self.particles.material_id[mask])
        mid = int(ids[0])
        shared = np.any(self.particles.material_id[~mask] == mid) or ids.size > 1
        import copy as _copy
        mat = _copy.deepcopy(self.materials[mid])
        allowed = {"mu", "lam", "density", "tau_y", "dp_alpha", "clamp_min",
                   "clamp_max", "stress_model", "plasticity"}
        for key, value in changes.items():
            if key not in allowed:
                raise KeyError(f"unknown material parameter {key!r}")
            setattr(mat, key, type(getattr(mat, key))(value))
        mat.validate()
        if shared:
            self.materials.append(mat)
            mid = len(self.materials) - 1
        else:
            self.materials[mid] = mat
        self.particles.material_id[mask] = mid
        if self.appearance.count:
            amask = np.isin(self.appearance.category_id, self.objects[object_id])
            self.appearance.material_id[amask] = mid
        self.mat = material_table_arrays(self.materials)
        return mid

    # ------------------------------------------------------------------
    # diagnostics

    def total_mass(self) -> float:
        return float(self.particles.m.sum())

    def max_penetration(self, world: ContactWorld | None) -> float:
        """Residual penetration depth after projection (0 when clean)."""
        if world is None or world.empty or not self.particles.count:
            return 0.0
        d = kernels.min_sdf_over_points(
            self.particles.x, self.particles.active, world.packed.ptype,
            world.packed.centers, world.packed.radii, world.packed.velocities,
            world.hash.cell_start, world.hash.items, world.hash.n, world.hash.cell_size)
        return float(max(0.0, -d)) if np.isfinite(d) else 0.0

    def reset_phase_timers(self) -> dict[str, float]:
        out = dict(self.phase_seconds)
        self.phase_seconds = {p: 0.0 for p in PHASES}
        return out

    def make_world(self, rigs: list[MedialRig]) -> ContactWorld:
        return ContactWorld(rigs, self.config.domain_size, self.grid.dx)
