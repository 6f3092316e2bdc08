"""Shared simulation state containers.

All state is structure-of-arrays numpy data in float64 (wire formats may
narrow to float32). Positions live in a cubic domain [0, L]^3; the grid
stores node quantities on an n^3 lattice with spacing dx = L / n, node i
sitting at i * dx.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

# material stress models
STRESS_NEOHOOKEAN = 0
STRESS_COROTATED = 1

# plasticity models
PLASTICITY_NONE = 0
PLASTICITY_VON_MISES = 1
PLASTICITY_CLAMP = 2
PLASTICITY_DRUCKER_PRAGER = 3


class BoundaryKind(IntEnum):
    NONE = 0   # open box, used by tests that need wall-free dynamics
    SLIP = 1
    STICKY = 2


@dataclass
class MaterialParams:
    """Elastic + plastic parameters for one material table entry."""

    mu: float
    lam: float
    density: float
    stress_model: int = STRESS_NEOHOOKEAN
    plasticity: int = PLASTICITY_NONE
    # plasticity knobs; meaning depends on the model
    dp_alpha: float = 0.0          # Drucker-Prager friction parameter
    tau_y: float = 0.0             # Von Mises yield stress
    clamp_min: float = 1.0         # singular value clamp bounds
    clamp_max: float = 1.0
    name: str = "material"

    def validate(self) -> None:
        if not self.mu > 0:
            raise ValueError(f"material {self.name!r}: mu must be > 0, got {self.mu}")
        if self.lam < 0:
            raise ValueError(f"material {self.name!r}: lambda must be >= 0, got {self.lam}")
        if not self.density > 0:
            raise ValueError(f"material {self.name!r}: density must be > 0, got {self.density}")
        if self.plasticity == PLASTICITY_DRUCKER_PRAGER and self.dp_alpha < 0:
            raise ValueError(f"material {self.name!r}: alpha must be >= 0")
        if self.plasticity == PLASTICITY_VON_MISES and self.tau_y < 0:
            raise ValueError(f"material {self.name!r}: tau_y must be >= 0")
        if self.plasticity == PLASTICITY_CLAMP:
            if not (0 < self.clamp_min <= 1.0 <= self.clamp_max):
                raise ValueError(
                    f"material {self.name!r}: clamp bounds need 0 < min <= 1 <= max, "
                    f"got [{self.clamp_min}, {self.clamp_max}]"
                )


def material_table_arrays(materials: list[MaterialParams]) -> dict[str, np.ndarray]:
    """Pack a material table into flat arrays for the numba kernels."""
    return {
        "mu": np.array([m.mu for m in materials], dtype=np.float64),
        "lam": np.array([m.lam for m in materials], dtype=np.float64),
        "stress_model": np.array([m.stress_model for m in materials], dtype=np.int32),
        "plasticity": np.array([m.plasticity for m in materials], dtype=np.int32),
        "dp_alpha": np.array([m.dp_alpha for m in materials], dtype=np.float64),
        "tau_y": np.array([m.tau_y for m in materials], dtype=np.float64),
        "clamp_min": np.array([m.clamp_min for m in materials], dtype=np.float64),
        "clamp_max": np.array([m.clamp_max for m in materials], dtype=np.float64),
    }


@dataclass
class ParticleSet:
    """Structure-of-arrays state for all simulation particles."""

    x: np.ndarray          # (N, 3) positions
    v: np.ndarray          # (N, 3) velocities
    m: np.ndarray          # (N,) masses
    vol0: np.ndarray       # (N,) initial volumes
    F: np.ndarray          # (N, 3, 3) deformation gradients
    C: np.ndarray          # (N, 3, 3) affine velocity matrices
    material_id: np.ndarray  # (N,) int32
    category_id: np.ndarray  # (N,) int32
    active: np.ndarray     # (N,) bool

    @property
    def count(self) -> int:
        return self.x.shape[0]

    @classmethod
    def empty(cls) -> "ParticleSet":
        return cls(
            x=np.zeros((0, 3)), v=np.zeros((0, 3)), m=np.zeros(0), vol0=np.zeros(0),
            F=np.zeros((0, 3, 3)), C=np.zeros((0, 3, 3)),
            material_id=np.zeros(0, dtype=np.int32),
            category_id=np.zeros(0, dtype=np.int32),
            active=np.zeros(0, dtype=bool),
        )

    @classmethod
    def allocate(cls, n: int) -> "ParticleSet":
        F = np.zeros((n, 3, 3))
        F[:, 0, 0] = F[:, 1, 1] = F[:, 2, 2] = 1.0
        return cls(
            x=np.zeros((n, 3)), v=np.zeros((n, 3)), m=np.zeros(n), vol0=np.zeros(n),
            F=F, C=np.zeros((n, 3, 3)),
            material_id=np.zeros(n, dtype=np.int32),
            category_id=np.zeros(n, dtype=np.int32),
            active=np.ones(n, dtype=bool),
        )

    def copy(self) -> "ParticleSet":
        return ParticleSet(
            x=self.x.copy(), v=self.v.copy(), m=self.m.copy(), vol0=self.vol0.copy(),
            F=self.F.copy(), C=self.C.copy(),
            material_id=self.material_id.copy(), category_id=self.category_id.copy(),
            active=self.active.copy(),
        )

    def select(self, idx: np.ndarray) -> "ParticleSet":
        return ParticleSet(
            x=self.x[idx], v=self.v[idx], m=self.m[idx], vol0=self.vol0[idx],
            F=self.F[idx], C=self.C[idx],
            material_id=self.material_id[idx], category_id=self.category_id[idx],
            active=self.active[idx],
        )

    def append(self, other: "ParticleSet") -> "ParticleSet":
        return ParticleSet(
            x=np.concatenate([self.x, other.x]),
            v=np.concatenate([self.v, other.v]),
            m=np.concatenate([self.m, other.m]),
            vol0=np.concatenate([self.vol0, other.vol0]),
            F=np.concatenate([self.F, other.F]),
            C=np.concatenate([self.C, other.C]),
            material_id=np.concatenate([self.material_id, other.material_id]),
            category_id=np.concatenate([self.category_id, other.category_id]),
            active=np.concatenate([self.active, other.active]),
        )


@dataclass
class Grid:
    """Dense Eulerian background grid over the cubic domain."""

    n: int                 # nodes per axis
    dx: float              # spacing, L / n
    mass: np.ndarray       # (n, n, n)
    momentum: np.ndarray   # (n, n, n, 3)
    velocity: np.ndarray   # (n, n, n, 3)

    @classmethod
    def allocate(cls, n: int, domain: float) -> "Grid":
        if n < 8:
            raise ValueError(f"grid resolution must be >= 8, got {n}")
        return cls(
            n=n, dx=domain / n,
            mass=np.zeros((n, n, n)),
            momentum=np.zeros((n, n, n, 3)),
            velocity=np.zeros((n, n, n, 3)),
        )

    def clear(self) -> None:
        self.mass[:] = 0.0
        self.momentum[:] = 0.0
        self.velocity[:] = 0.0


@dataclass
class AppearanceSet:
    """Rendering splats driven kinematically by the simulation grid.

    Covariances are carried in material space (A) and world space
    (a = F A F^T); the color/opacity payload is opaque passthrough.
    """

    x: np.ndarray            # (N, 3) centers
    v: np.ndarray            # (N, 3)
    C: np.ndarray            # (N, 3, 3) affine gather matrices
    F: np.ndarray            # (N, 3, 3) per-splat deformation gradients
    cov0: np.ndarray         # (N, 3, 3) material-space covariances, SPD
    cov: np.ndarray          # (N, 3, 3) deformed covariances F cov0 F^T
    payload: np.ndarray      # (N, K) float32 passthrough
    material_id: np.ndarray  # (N,) int32
    category_id: np.ndarray  # (N,) int32
    active: np.ndarray       # (N,) bool

    @property
    def count(self) -> int:
        return self.x.shape[0]

    @classmethod
    def empty(cls) -> "AppearanceSet":
        return cls(
            x=np.zeros((0, 3)), v=np.zeros((0, 3)), C=np.zeros((0, 3, 3)),
            F=np.zeros((0, 3, 3)), cov0=np.zeros((0, 3, 3)), cov=np.zeros((0, 3, 3)),
            payload=np.zeros((0, 0), dtype=np.float32),
            material_id=np.zeros(0, dtype=np.int32),
            category_id=np.zeros(0, dtype=np.int32),
            active=np.zeros(0, dtype=bool),
        )

    def copy(self) -> "AppearanceSet":
        return AppearanceSet(
            x=self.x.copy(), v=self.v.copy(), C=self.C.copy(), F=self.F.copy(),
            cov0=self.cov0.copy(), cov=self.cov.copy(), payload=self.payload.copy(),
            material_id=self.material_id.copy(), category_id=self.category_id.copy(),
            active=self.active.copy(),
        )

    def select(self, idx: np.ndarray) -> "AppearanceSet":
        return AppearanceSet(
            x=self.x[idx], v=self.v[idx], C=self.C[idx], F=self.F[idx],
            cov0=self.cov0[idx], cov=self.cov[idx], payload=self.payload[idx],
            material_id=self.material_id[idx], category_id=self.category_id[idx],
            active=self.active[idx],
        )


@dataclass
class Snapshot:
    """Full copy of the editable state at one instant."""

    snapshot_id: int
    timestamp: float
    particles: ParticleSet
    appearance: AppearanceSet
    objects: dict[int, list[int]] = field(default_factory=dict)  # object id -> category ids
