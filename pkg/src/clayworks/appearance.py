"""Appearance splats: separated from the physics particles.

Splats are anisotropic Gaussians (center + SPD covariance + opaque color
payload). A sparser set of physics particles drives the grid; splats
only gather from it: per substep they run the same grid-to-particle
update, boundary projection and plastic return map as particles, then
refresh the deformed covariance a = F A F^T. Splats never write grid or
particle state.

Splat files are .npz archives (see docs/formats.md): positions plus
either packed symmetric covariances or scale+rotation, and an optional
payload block carried through untouched.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import kernels
from .medial import ContactWorld
from .types import AppearanceSet, ParticleSet

SPLAT_SCHEMA_VERSION = 1

_SYM_IDX = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]


def pack_symmetric(m: np.ndarray) -> np.ndarray:
    """(N, 3, 3) symmetric -> (N, 6) as [xx, yy, zz, xy, xz, yz]."""
    return np.stack([m[:, i, j] for i, j in _SYM_IDX], axis=1)


def unpack_symmetric(p: np.ndarray) -> np.ndarray:
    n = p.shape[0]
    m = np.empty((n, 3, 3))
    for k, (i, j) in enumerate(_SYM_IDX):
        m[:, i, j] = p[:, k]
        m[:, j, i] = p[:, k]
    return m


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Unit quaternions (N, 4) as (x, y, z, w) -> rotation matrices."""
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    x, y, z, w = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    m = np.empty((q.shape[0], 3, 3))
    m[:, 0, 0] = 1 - 2 * (y * y + z * z)
    m[:, 0, 1] = 2 * (x * y - w * z)
    m[:, 0, 2] = 2 * (x * z + w * y)
    m[:, 1, 0] = 2 * (x * y + w * z)
    m[:, 1, 1] = 1 - 2 * (x * x + z * z)
    m[:, 1, 2] = 2 * (y * z - w * x)
    m[:, 2, 0] = 2 * (x * z - w * y)
    m[:, 2, 1] = 2 * (y * z + w * x)
    m[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return m


class SplatFormatError(ValueError):
    pass


def _repair_covariances(cov: np.ndarray, floor: float = 1e-8) -> tuple[np.ndarray, int]:
    """Clamp eigenvalues below `floor`; returns (repaired, count repaired)."""
    cov = 0.5 * (cov + np.transpose(cov, (0, 2, 1)))
    w, v = np.linalg.eigh(cov)
    bad = np.any(w < floor, axis=1)
    if not np.any(bad):
        return cov, 0
    w = np.maximum(w, floor)
    fixed = np.einsum("nij,nj,nkj->nik", v, w, v)
    cov[bad] = fixed[bad]
    return cov, int(bad.sum())


def load_splats(path: str | Path) -> tuple[AppearanceSet, int]:
    """Load a splat point list; returns (set, covariances repaired)."""
    path = Path(path)
    try:
        data = np.load(path)
    except Exception as e:
        raise SplatFormatError(f"cannot read splat file {path}: {e}") from e
    version = int(data["format_version"][0]) if "format_version" in data else 1
    if version != SPLAT_SCHEMA_VERSION:
        raise SplatFormatError(f"unsupported splat format_version {version}")
    if "positions" not in data:
        raise SplatFormatError("splat file missing 'positions'")
    x = np.asarray(data["positions"], dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 3:
        raise SplatFormatError(f"positions must be (N, 3), got {x.shape}")
    n = x.shape[0]
    if "covariances" in data:
        cov = unpack_symmetric(np.asarray(data["covariances"], dtype=np.float64))
    elif "scales" in data and "rotations" in data:
        R = quat_to_matrix(np.asarray(data["rotations"], dtype=np.float64))
        s2 = np.asarray(data["scales"], dtype=np.float64) ** 2
        cov = np.einsum("nij,nj,nkj->nik", R, s2, R)
    else:
        raise SplatFormatError("splat file needs 'covariances' or 'scales'+'rotations'")
    if cov.shape[0] != n:
        raise SplatFormatError("covariance count does not match positions")
    cov, repaired = _repair_covariances(cov)
    payload = np.asarray(data["payload"], dtype=np.float32) if "payload" in data \
        else np.zeros((n, 0), dtype=np.float32)
    category = np.asarray(data["category"], dtype=np.int32) if "category" in data \
        else np.zeros(n, dtype=np.int32)

    F = np.zeros((n, 3, 3))
    F[:, 0, 0] = F[:, 1, 1] = F[:, 2, 2] = 1.0
    app = AppearanceSet(
        x=x.copy(), v=np.zeros((n, 3)), C=np.zeros((n, 3, 3)), F=F,
        cov0=cov, cov=cov.copy(), payload=payload,
        material_id=np.zeros(n, dtype=np.int32), category_id=category,
        active=np.ones(n, dtype=bool),
    )
    return app, repaired


def save_splats(app: AppearanceSet, path: str | Path) -> None:
    """Write deformed splats in the same point-list format."""
    np.savez(
        Path(path),
        format_version=np.array([SPLAT_SCHEMA_VERSION], dtype=np.int32),
        positions=app.x,
        covariances=pack_symmetric(app.cov),
        payload=app.payload,
        category=app.category_id,
    )


def derive_particles(app: AppearanceSet, ratio: float, density: float,
                     material_id: int = 0, seed: int = 0) -> ParticleSet:
    """Subsample splat centers into a sparser physics particle set.

    Exactly round(ratio * count) particles are drawn uniformly without
    replacement (deterministic for a fixed seed); mass comes from total
    splat volume * density / count.
    """
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"sample ratio must be in (0, 1], got {ratio}")
    n = app.count
    if n == 0:
        return ParticleSet.empty()
    k = max(1, int(round(ratio * n)))
    if k >= n:
        idx = np.arange(n)
    else:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(n, size=k, replace=False))
    total_volume = float(np.sum(splat_volumes(app.cov0)))
    p = ParticleSet.allocate(k)
    p.x[:] = app.x[idx]
    p.vol0[:] = total_volume / k
    p.m[:] = density * total_volume / k
    p.material_id[:] = material_id
    p.category_id[:] = app.category_id[idx]
    return p


def ingest_splats(path: str | Path, ratio: float, density: float,
                  material_id: int = 0, seed: int = 0
                  ) -> tuple[AppearanceSet, ParticleSet, int]:
    app, repaired = load_splats(path)
    app.material_id[:] = material_id
    particles = derive_particles(app, ratio, density, material_id, seed)
    return app, particles, repaired


# ---------------------------------------------------------------------------
# kinematic advection

def advect_appearance(sim, world: ContactWorld | None) -> None:
    """One splat substep: F update, grid gather, projection, plasticity,
    covariance refresh. Mirrors the particle phases exactly so a splat
    co-located with a particle follows the same trajectory."""
    app: AppearanceSet = sim.appearance
    if app.count == 0:
        return
    dt = sim.dt
    err = np.zeros(2, dtype=np.int64)
    kernels.update_deformation(app.F, app.C, app.active, dt, err)
    kernels.g2p(app.x, app.v, app.C, sim.grid.velocity, app.active,
                sim.grid.dx, dt, sim.clamp_lo, sim.clamp_hi)
    if world is not None and not world.empty:
        from .engine import project_pruned
        project_pruned(world, app.x, app.v, app.active, sim.clamp_lo, sim.clamp_hi)
    kernels.apply_plasticity_batch(
        app.F, app.material_id, sim.mat["plasticity"], sim.mat["mu"],
        sim.mat["lam"], sim.mat["dp_alpha"], sim.mat["tau_y"],
        sim.mat["clamp_min"], sim.mat["clamp_max"], app.active)
    refresh_covariances(app)


def refresh_covariances(app: AppearanceSet) -> None:
    """a = F A F^T for all splats."""
    if app.count:
        app.cov = np.einsum("nij,njk,nlk->nil", app.F, app.cov0, app.F)


# ---------------------------------------------------------------------------
# volume statistics

def splat_volumes(cov: np.ndarray) -> np.ndarray:
    """Ellipsoid volume (4 pi / 3) sqrt(det a) per splat."""
    det = np.linalg.det(cov)
    return (4.0 * np.pi / 3.0) * np.sqrt(np.maximum(det, 0.0))


def volume_ratio_metric(app: AppearanceSet, alpha_fraction: float = 0.1,
                        r: float = 2.0) -> float:
    """max(mean(top-alpha volumes) / mean(bottom-alpha volumes), r) - r.

    Zero when the largest-to-smallest spread is within the allowed ratio r.
    """
    if app.count == 0:
        raise ValueError("volume_ratio_metric needs a nonempty appearance set")
    if not 0.0 < alpha_fraction <= 0.5:
        raise ValueError(f"alpha_fraction must be in (0, 0.5], got {alpha_fraction}")
    vols = np.sort(splat_volumes(app.cov))
    k = max(1, int(np.floor(alpha_fraction * vols.size)))
    bottom = float(np.mean(vols[:k]))
    top = float(np.mean(vols[-k:]))
    if bottom <= 0.0:
        return float("inf")
    return max(top / bottom, r) - r
