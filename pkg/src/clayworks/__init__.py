"""clayworks: interactive elastoplastic clay sculpting engine.

Core pieces: an MLS-MPM simulator with localized active regions, medial
primitive tools with grid-level contact forces and particle projection,
category-aware marching-cubes surfacing, kinematically driven appearance
splats, deterministic trajectory replay, and a live session service.
"""

from .config import SceneConfig, load_scene, parse_scene
from .engine import Simulation
from .seeding import seed_particles
from .types import AppearanceSet, Grid, MaterialParams, ParticleSet, Snapshot

__version__ = "0.1.0"

__all__ = [
    "AppearanceSet",
    "Grid",
    "MaterialParams",
    "ParticleSet",
    "SceneConfig",
    "Simulation",
    "Snapshot",
    "load_scene",
    "parse_scene",
    "seed_particles",
    "__version__",
]
