"""Scene configuration: schema, validation and loading.

Scene files are JSON documents (schema documented in docs/formats.md).
Everything carries a default matching the reference desk-scale setup:
unit domain, 64^3 grid, 8 particles per cell, 5 substeps per frame.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from .types import (
    PLASTICITY_CLAMP,
    PLASTICITY_DRUCKER_PRAGER,
    PLASTICITY_NONE,
    PLASTICITY_VON_MISES,
    STRESS_COROTATED,
    STRESS_NEOHOOKEAN,
    MaterialParams,
)

SCENE_SCHEMA_VERSION = 1
BASE_DT = 1e-4          # stable default at the 64^3 reference resolution
BASE_GRID = 64


class SceneError(ValueError):
    """Raised for malformed or invalid scene files."""


class PlasticitySpec(BaseModel):
    model: Literal["none", "von_mises", "drucker_prager", "clamp"] = "none"
    alpha: float = Field(default=0.0, ge=0.0)
    tau_y: float = Field(default=0.0, ge=0.0)
    sigma_min: float = 1.0
    sigma_max: float = 1.0

    @model_validator(mode="after")
    def _check_clamp(self) -> "PlasticitySpec":
        if self.model == "clamp" and not (0 < self.sigma_min <= 1.0 <= self.sigma_max):
            raise ValueError("clamp plasticity needs 0 < sigma_min <= 1 <= sigma_max")
        return self


class MaterialSpec(BaseModel):
    name: str = "clay"
    mu: float = Field(default=3448.0, gt=0.0)
    lam: float = Field(default=31034.0, ge=0.0, alias="lambda")
    density: float = Field(default=1000.0, gt=0.0)
    stress_model: Literal["neo_hookean", "corotated"] = "neo_hookean"
    plasticity: PlasticitySpec = PlasticitySpec()

    model_config = {"populate_by_name": True}

    def to_params(self) -> MaterialParams:
        stress = STRESS_NEOHOOKEAN if self.stress_model == "neo_hookean" else STRESS_COROTATED
        plast_map = {
            "none": PLASTICITY_NONE,
            "von_mises": PLASTICITY_VON_MISES,
            "drucker_prager": PLASTICITY_DRUCKER_PRAGER,
            "clamp": PLASTICITY_CLAMP,
        }
        p = MaterialParams(
            mu=self.mu, lam=self.lam, density=self.density,
            stress_model=stress, plasticity=plast_map[self.plasticity.model],
            dp_alpha=self.plasticity.alpha, tau_y=self.plasticity.tau_y,
            clamp_min=self.plasticity.sigma_min, clamp_max=self.plasticity.sigma_max,
            name=self.name,
        )
        p.validate()
        return p


class SphereShape(BaseModel):
    type: Literal["sphere"] = "sphere"
    center: tuple[float, float, float]
    radius: float = Field(gt=0.0)
    material: str = "clay"
    category: int = 0
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius

    def contains(self, pts: np.ndarray) -> np.ndarray:
        return np.sum((pts - np.asarray(self.center)) ** 2, axis=-1) <= self.radius**2


class BoxShape(BaseModel):
    type: Literal["box"] = "box"
    center: tuple[float, float, float]
    size: tuple[float, float, float]
    material: str = "clay"
    category: int = 0
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @field_validator("size")
    @classmethod
    def _positive(cls, v):
        if min(v) <= 0:
            raise ValueError("box size components must be > 0")
        return v

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        c, h = np.asarray(self.center), 0.5 * np.asarray(self.size)
        return c - h, c + h

    def contains(self, pts: np.ndarray) -> np.ndarray:
        lo, hi = self.aabb()
        return np.all((pts >= lo) & (pts <= hi), axis=-1)


class TorusShape(BaseModel):
    """Torus around an axis-aligned direction through `center`."""

    type: Literal["torus"] = "torus"
    center: tuple[float, float, float]
    major_radius: float = Field(gt=0.0)
    minor_radius: float = Field(gt=0.0)
    axis: Literal["x", "y", "z"] = "y"
    material: str = "clay"
    category: int = 0
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        r = self.major_radius + self.minor_radius
        ext = {"x": (self.minor_radius, r, r), "y": (r, self.minor_radius, r),
               "z": (r, r, self.minor_radius)}[self.axis]
        c = np.asarray(self.center)
        return c - np.asarray(ext), c + np.asarray(ext)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        d = pts - np.asarray(self.center)
        ax = "xyz".index(self.axis)
        others = [i for i in range(3) if i != ax]
        ring = np.hypot(d[..., others[0]], d[..., others[1]]) - self.major_radius
        return ring**2 + d[..., ax] ** 2 <= self.minor_radius**2


class CylinderShape(BaseModel):
    type: Literal["cylinder"] = "cylinder"
    center: tuple[float, float, float]
    radius: float = Field(gt=0.0)
    half_height: float = Field(gt=0.0)
    axis: Literal["x", "y", "z"] = "y"
    material: str = "clay"
    category: int = 0
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        ext = [self.radius] * 3
        ext["xyz".index(self.axis)] = self.half_height
        c = np.asarray(self.center)
        return c - np.asarray(ext), c + np.asarray(ext)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        d = pts - np.asarray(self.center)
        ax = "xyz".index(self.axis)
        others = [i for i in range(3) if i != ax]
        radial = d[..., others[0]] ** 2 + d[..., others[1]] ** 2 <= self.radius**2
        return radial & (np.abs(d[..., ax]) <= self.half_height)


Shape = Annotated[Union[SphereShape, BoxShape, TorusShape, CylinderShape],
                  Field(discriminator="type")]


class ContactSpec(BaseModel):
    pressure_stiffness: float = Field(default=1e4, ge=0.0)  # 1/s^2: dv = k * depth * dt
    friction: float = Field(default=0.4, ge=0.0)


class SurfacingSpec(BaseModel):
    resolution: int = Field(default=128, ge=16)
    iso: float | None = None          # None: 0.3 * mean nonzero density
    iso_fraction: float = Field(default=0.3, gt=0.0)
    smooth_iterations: int = Field(default=5, ge=0)
    smooth_strength: float = Field(default=0.5, gt=0.0, le=1.0)
    cadence: int = Field(default=2, ge=1)  # frames between mesh rebuilds


class LocalizedSpec(BaseModel):
    enabled: bool = False
    half_side: float = Field(default=0.25, gt=0.0)


class GestureSpec(BaseModel):
    default_radius: float = Field(default=0.15, gt=0.0)
    default_force_ratio: float = Field(default=30.0, gt=0.0)


class SceneConfig(BaseModel):
    schema_version: int = SCENE_SCHEMA_VERSION
    name: str = "scene"
    domain_size: float = Field(default=1.0, gt=0.0)
    grid_resolution: int = Field(default=BASE_GRID, ge=8)
    particles_per_cell: int = Field(default=8, ge=1)
    substeps_per_frame: int = Field(default=5, ge=1)
    dt: float | None = Field(default=None, gt=0.0)  # None: BASE_DT scaled for fine grids
    gravity: tuple[float, float, float] = (0.0, -9.8, 0.0)
    damping: float = Field(default=2.0, ge=0.0)
    boundary: Literal["none", "slip", "sticky"] = "slip"
    wall_thickness: int = Field(default=3, ge=0)
    seed: int = 0
    materials: list[MaterialSpec] = Field(default_factory=lambda: [MaterialSpec()])
    shapes: list[Shape] = Field(default_factory=list)
    contact: ContactSpec = ContactSpec()
    surfacing: SurfacingSpec = SurfacingSpec()
    localized: LocalizedSpec = LocalizedSpec()
    gesture: GestureSpec = GestureSpec()

    @model_validator(mode="after")
    def _check(self) -> "SceneConfig":
        if self.schema_version != SCENE_SCHEMA_VERSION:
            raise ValueError(
                f"unsupported scene schema_version {self.schema_version}, "
                f"expected {SCENE_SCHEMA_VERSION}")
        names = [m.name for m in self.materials]
        if len(set(names)) != len(names):
            raise ValueError(f"materials: duplicate names in {names}")
        for i, s in enumerate(self.shapes):
            if s.material not in names:
                raise ValueError(f"shapes[{i}].material: unknown material {s.material!r}")
            lo, hi = s.aabb()
            if np.any(lo < 0.0) or np.any(hi > self.domain_size):
                raise ValueError(f"shapes[{i}]: shape outside domain [0, {self.domain_size}]^3")
        return self

    @property
    def dx(self) -> float:
        return self.domain_size / self.grid_resolution

    def effective_dt(self) -> float:
        """Explicit-scheme timestep: BASE_DT at the reference grid, shrunk
        proportionally to dx for finer grids (CFL-style)."""
        if self.dt is not None:
            return self.dt
        return BASE_DT * min(1.0, BASE_GRID / self.grid_resolution)

    def frame_dt(self) -> float:
        return self.effective_dt() * self.substeps_per_frame

    def material_params(self) -> list[MaterialParams]:
        return [m.to_params() for m in self.materials]

    def material_index(self, name: str) -> int:
        for i, m in enumerate(self.materials):
            if m.name == name:
                return i
        raise KeyError(f"unknown material {name!r}")


def load_scene(path: str | Path) -> SceneConfig:
    """Load and validate a scene file, filling defaults for omitted fields."""
    path = Path(path)
    try:
        raw = path.read_text()
    except OSError as e:
        raise SceneError(f"cannot read scene file {path}: {e}") from e
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as e:
        raise SceneError(f"scene file {path} is not valid JSON: {e}") from e
    return parse_scene(doc)


def parse_scene(doc: dict) -> SceneConfig:
    try:
        return SceneConfig.model_validate(doc)
    except ValidationError as e:
        first = e.errors()[0]
        loc = ".".join(str(p) for p in first["loc"])
        raise SceneError(f"invalid scene: {loc}: {first['msg']}") from e


def dump_scene(config: SceneConfig, path: str | Path) -> None:
    Path(path).write_text(config.model_dump_json(indent=2, by_alias=True))
