"""Input handling: trajectories, pose smoothing, gestures, object edits.

A trajectory is a recorded input timeline: per-sample joint poses plus
gesture events, replayed one sample per simulation frame. Pose smoothing
fits each joint linearly in time over the trailing 0.2 s window
(weighted by frame duration), which kills tracking jitter while
reproducing steady motion exactly.
"""

from __future__ import annotations

import json
import time as _time
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator

from .config import SceneConfig
from .engine import ForceField, Simulation
from .medial import MedialRig
from .rigs import make_rig
from .snapshots import restore_snapshot
from .types import Snapshot

TRAJECTORY_SCHEMA_VERSION = 1
SMOOTHING_WINDOW = 0.2  # seconds of tracking history


class TrajectoryError(ValueError):
    pass


class EditError(ValueError):
    pass


class ProtocolError(ValueError):
    pass


# ---------------------------------------------------------------------------
# trajectory schema

class JointPose(BaseModel):
    p: tuple[float, float, float]
    q: tuple[float, float, float, float] | None = None  # unit quaternion xyzw


class PinchStart(BaseModel):
    type: Literal["pinch_start"] = "pinch_start"
    hand: str
    position: tuple[float, float, float]
    radius: float | None = None
    force_ratio: float | None = None


class PinchMove(BaseModel):
    type: Literal["pinch_move"] = "pinch_move"
    hand: str
    position: tuple[float, float, float]


class PinchEnd(BaseModel):
    type: Literal["pinch_end"] = "pinch_end"
    hand: str


class ToolSelect(BaseModel):
    type: Literal["tool_select"] = "tool_select"
    hand: str
    tool: str


GestureEvent = Annotated[Union[PinchStart, PinchMove, PinchEnd, ToolSelect],
                         Field(discriminator="type")]


class TrajectorySample(BaseModel):
    t: float
    joints: dict[str, JointPose] = Field(default_factory=dict)
    events: list[GestureEvent] = Field(default_factory=list)


class Trajectory(BaseModel):
    schema_version: int = TRAJECTORY_SCHEMA_VERSION
    name: str = "trajectory"
    rigs: dict[str, str] = Field(default_factory=dict)  # instance -> rig type
    samples: list[TrajectorySample] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check(self) -> "Trajectory":
        if self.schema_version != TRAJECTORY_SCHEMA_VERSION:
            raise ValueError(f"unsupported trajectory schema_version {self.schema_version}")
        last = -np.inf
        for i, s in enumerate(self.samples):
            if s.t <= last:
                raise ValueError(f"samples[{i}]: timestamps must be strictly increasing")
            last = s.t
        pinched: set[str] = set()
        for i, s in enumerate(self.samples):
            for e in s.events:
                if e.type == "pinch_start":
                    if e.hand in pinched:
                        raise ValueError(f"samples[{i}]: pinch_start with active pinch on "
                                         f"hand {e.hand!r}")
                    pinched.add(e.hand)
                elif e.type in ("pinch_move", "pinch_end"):
                    if e.hand not in pinched:
                        raise ValueError(f"samples[{i}]: {e.type} without pinch_start on "
                                         f"hand {e.hand!r}")
                    if e.type == "pinch_end":
                        pinched.discard(e.hand)
        return self


def load_trajectory(path: str | Path) -> Trajectory:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise TrajectoryError(f"cannot read trajectory {path}: {e}") from e
    try:
        return Trajectory.model_validate(doc)
    except ValidationError as e:
        first = e.errors()[0]
        loc = ".".join(str(p) for p in first["loc"])
        raise TrajectoryError(f"invalid trajectory: {loc}: {first['msg']}") from e


def dump_trajectory(traj: Trajectory, path: str | Path) -> None:
    Path(path).write_text(traj.model_dump_json(indent=2))


# ---------------------------------------------------------------------------
# pose smoothing

class PoseHistory:
    """Trailing window of raw joint samples (0.2 s plus one older sample)."""

    def __init__(self, window: float = SMOOTHING_WINDOW):
        self.window = window
        self.samples: deque[tuple[float, dict[str, JointPose]]] = deque()

    def push(self, t: float, joints: dict[str, JointPose]) -> None:
        self.samples.append((t, joints))
        while len(self.samples) >= 2 and t - self.samples[1][0] > self.window:
            self.samples.popleft()

    def smooth(self, now: float) -> dict[str, tuple[np.ndarray, tuple | None]]:
        """Per-joint smoothed positions at time `now` (orientations pass
        through from the latest sample carrying the joint)."""
        out: dict[str, tuple[np.ndarray, tuple | None]] = {}
        if not self.samples:
            return out
        names: dict[str, None] = {}
        for _, joints in self.samples:
            for name in joints:
                names.setdefault(name)
        for name in names:
            ts, ps, quat = [], [], None
            for t, joints in self.samples:
                jp = joints.get(name)
                if jp is not None:
                    ts.append(t)
                    ps.append(jp.p)
                    if jp.q is not None:
                        quat = jp.q
            out[name] = (smooth_positions(np.asarray(ts), np.asarray(ps, dtype=np.float64),
                                          now), quat)
        return out


def smooth_positions(ts: np.ndarray, ps: np.ndarray, now: float) -> np.ndarray:
    """Duration-weighted linear least-squares fit of ps(t), evaluated at now.

    Exact for any affine-in-time signal; a single sample (or coincident
    times) returns the last sample unchanged.
    """
    k = ts.size
    if k == 1:
        return ps[-1].copy()
    w = np.empty(k)
    w[1:] = np.diff(ts)
    w[0] = w[1] if k > 1 else 1.0
    w = np.maximum(w, 1e-12)
    wsum = w.sum()
    tbar = float(np.sum(w * ts) / wsum)
    dt = ts - tbar
    denom = float(np.sum(w * dt * dt))
    if denom < 1e-18:
        return ps[-1].copy()
    a = (w[:, None] * ps).sum(axis=0) / wsum
    b = (w[:, None] * dt[:, None] * ps).sum(axis=0) / denom
    return a + b * (now - tbar)


# ---------------------------------------------------------------------------
# gesture force fields

def falloff(s: np.ndarray) -> np.ndarray:
    """C1 kernel (1 - s^2)^2 on s in [0, 1], zero outside."""
    s = np.asarray(s, dtype=np.float64)
    k = np.maximum(0.0, 1.0 - s * s)
    return k * k


@dataclass
class PinchState:
    hand: str
    start: np.ndarray
    now: np.ndarray


class GestureController:
    """Turns pinch events into per-particle force fields.

    The first pinch captures the selection (particles within the radius of
    the pinch point); a second simultaneous pinch switches to twist mode,
    driven by the per-frame rotation of the inter-hand axis.
    """

    def __init__(self, default_radius: float, default_force_ratio: float):
        self.default_radius = default_radius
        self.default_force_ratio = default_force_ratio
        self.pinches: dict[str, PinchState] = {}
        self.order: list[str] = []
        self.center: np.ndarray | None = None
        self.radius = default_radius
        self.force_ratio = default_force_ratio
        self.indices: np.ndarray | None = None
        self.prev_axis: np.ndarray | None = None

    @property
    def active(self) -> bool:
        return bool(self.pinches)

    def handle(self, event, particles_x: np.ndarray) -> None:
        if event.type == "pinch_start":
            if event.hand in self.pinches:
                raise ProtocolError(f"pinch_start with active pinch on hand {event.hand!r}")
            pos = np.asarray(event.position, dtype=np.float64)
            self.pinches[event.hand] = PinchState(event.hand, pos.copy(), pos.copy())
            self.order.append(event.hand)
            if len(self.pinches) == 1:
                self.radius = event.radius if event.radius else self.default_radius
                self.force_ratio = (event.force_ratio if event.force_ratio
                                    else self.default_force_ratio)
                self.center = pos.copy()
                dist = np.linalg.norm(particles_x - pos, axis=1)
                self.indices = np.nonzero(dist <= self.radius)[0].astype(np.int64)
            self.prev_axis = None
        elif event.type == "pinch_move":
            st = self.pinches.get(event.hand)
            if st is None:
                raise ProtocolError(f"pinch_move without active pinch on hand {event.hand!r}")
            st.now = np.asarray(event.position, dtype=np.float64)
        elif event.type == "pinch_end":
            if event.hand not in self.pinches:
                raise ProtocolError(f"pinch_end without active pinch on hand {event.hand!r}")
            del self.pinches[event.hand]
            self.order.remove(event.hand)
            self.prev_axis = None
            if not self.pinches:
                self.center = None
                self.indices = None

    def build_field(self, particles_x: np.ndarray, frame_dt: float) -> ForceField | None:
        if not self.pinches or self.indices is None or self.indices.size == 0 \
                or self.center is None:
            return None
        sel = particles_x[self.indices]
        s = np.linalg.norm(sel - self.center, axis=1) / self.radius
        k = falloff(s)
        if len(self.pinches) == 1:
            st = self.pinches[self.order[0]]
            forces = self.force_ratio * k[:, None] * (st.now - st.start)
        else:
            a_state = self.pinches[self.order[0]]
            b_state = self.pinches[self.order[1]]
            axis_now = b_state.now - a_state.now
            norm = np.linalg.norm(axis_now)
            if norm < 1e-12:
                return None
            axis_now = axis_now / norm
            omega = np.zeros(3)
            if self.prev_axis is not None and frame_dt > 0:
                cross = np.cross(self.prev_axis, axis_now)
                angle = float(np.arctan2(np.linalg.norm(cross),
                                         np.dot(self.prev_axis, axis_now)))
                cn = np.linalg.norm(cross)
                if cn > 1e-12:
                    omega = (cross / cn) * (angle / frame_dt)
            self.prev_axis = axis_now
            foot = 0.5 * (a_state.now + b_state.now)
            forces = self.force_ratio * k[:, None] * np.cross(omega, sel - foot)
        return ForceField(center=self.center.copy(), radius=self.radius,
                          indices=self.indices, forces=forces)


# ---------------------------------------------------------------------------
# object edits

class MergeOp(BaseModel):
    type: Literal["merge"] = "merge"
    ids: list[int]
    unify_categories: bool = False


class CopyOp(BaseModel):
    type: Literal["copy"] = "copy"
    id: int
    offset: tuple[float, float, float]


class DeleteOp(BaseModel):
    type: Literal["delete"] = "delete"
    id: int


class ResetOp(BaseModel):
    type: Literal["reset"] = "reset"


class ScaleVisualOp(BaseModel):
    type: Literal["scale_visual"] = "scale_visual"
    id: int
    factor: float = Field(gt=0.0)


class MoveOp(BaseModel):
    type: Literal["move"] = "move"
    id: int
    offset: tuple[float, float, float]


EditOp = Annotated[Union[MergeOp, CopyOp, DeleteOp, ResetOp, ScaleVisualOp, MoveOp],
                   Field(discriminator="type")]


def _object_mask(sim: Simulation, object_id: int) -> np.ndarray:
    if object_id not in sim.objects:
        raise EditError(f"unknown object id {object_id}")
    cats = sim.objects[object_id]
    return np.isin(sim.particles.category_id, cats)


def _appearance_mask(sim: Simulation, cats: list[int]) -> np.ndarray:
    return np.isin(sim.appearance.category_id, cats)


def _check_in_domain(sim: Simulation, x: np.ndarray, what: str) -> None:
    if x.size and (np.any(x < 0.0) or np.any(x > sim.config.domain_size)):
        raise EditError(f"{what} escapes the domain")


def apply_edit(sim: Simulation, op, initial: Snapshot | None = None) -> None:
    """Apply one edit operation in place."""
    p = sim.particles
    if op.type == "merge":
        for oid in op.ids:
            if oid not in sim.objects:
                raise EditError(f"unknown object id {oid}")
        if len(op.ids) < 2:
            raise EditError("merge needs at least two object ids")
        keep = min(op.ids)
        cats = sorted({c for oid in op.ids for c in sim.objects[oid]})
        if op.unify_categories:
            target = cats[0]
            p.category_id[np.isin(p.category_id, cats)] = target
            if sim.appearance.count:
                sim.appearance.category_id[_appearance_mask(sim, cats)] = target
            cats = [target]
        for oid in op.ids:
            del sim.objects[oid]
        sim.objects[keep] = cats
    elif op.type == "copy":
        mask = _object_mask(sim, op.id)
        src_cats = sim.objects[op.id]
        dup = p.select(np.nonzero(mask)[0])
        dup.x[:] = dup.x + np.asarray(op.offset)
        _check_in_domain(sim, dup.x, "copy")
        remap = {c: sim.next_category_id + i for i, c in enumerate(src_cats)}
        dup.category_id[:] = np.vectorize(remap.get)(dup.category_id)
        sim.next_category_id += len(src_cats)
        sim.particles = p.append(dup)
        new_id = sim.next_object_id
        sim.next_object_id += 1
        sim.objects[new_id] = sorted(remap.values())
    elif op.type == "delete":
        mask = _object_mask(sim, op.id)
        keep = np.nonzero(~mask)[0]
        cats = sim.objects[op.id]
        sim.particles = p.select(keep)
        if sim.appearance.count:
            amask = _appearance_mask(sim, cats)
            sim.appearance = sim.appearance.select(np.nonzero(~amask)[0])
        del sim.objects[op.id]
    elif op.type == "reset":
        if initial is None:
            raise EditError("reset needs the initial snapshot")
        restore_snapshot(sim, initial)
    elif op.type == "scale_visual":
        mask = _object_mask(sim, op.id)
        if not np.any(mask):
            return
        centroid = p.x[mask].mean(axis=0)
        scaled = centroid + op.factor * (p.x[mask] - centroid)
        _check_in_domain(sim, scaled, "scale_visual")
        p.x[mask] = scaled
        if sim.appearance.count:
            amask = _appearance_mask(sim, sim.objects[op.id])
            sim.appearance.x[amask] = centroid + op.factor * (sim.appearance.x[amask] - centroid)
    elif op.type == "move":
        mask = _object_mask(sim, op.id)
        moved = p.x[mask] + np.asarray(op.offset)
        _check_in_domain(sim, moved, "move")
        p.x[mask] = moved
        if sim.appearance.count:
            amask = _appearance_mask(sim, sim.objects[op.id])
            sim.appearance.x[amask] = sim.appearance.x[amask] + np.asarray(op.offset)
    else:
        raise EditError(f"unknown edit op {op.type!r}")


# ---------------------------------------------------------------------------
# replay

@dataclass
class FrameMetrics:
    frame: int
    t: float
    particles: int
    active_particles: int
    mass_total: float
    max_penetration: float
    adjusted: int
    clamp_warnings: int

    def row(self) -> dict:
        return {
            "frame": self.frame, "t": self.t, "particles": self.particles,
            "active_particles": self.active_particles, "mass_total": self.mass_total,
            "max_penetration": self.max_penetration, "adjusted": self.adjusted,
            "clamp_warnings": self.clamp_warnings,
        }


@dataclass
class ReplayResult:
    sim: Simulation
    metrics: list[FrameMetrics]
    frame_seconds: list[float]

    def metrics_rows(self) -> list[dict]:
        return [m.row() for m in self.metrics]


class InputDriver:
    """Shared frame-input machinery: smoothing, rig posing, gestures.

    Used by offline replay and by the live session loop so both produce
    identical state for identical input timelines.
    """

    def __init__(self, config: SceneConfig, rig_specs: dict[str, str]):
        self.config = config
        self.rigs: dict[str, MedialRig] = {n: make_rig(t) for n, t in rig_specs.items()}
        self.posed: set[str] = set()  # rigs enter the world once they have a pose
        self.history = PoseHistory()
        self.gestures = GestureController(config.gesture.default_radius,
                                          config.gesture.default_force_ratio)
        self.last_t: float | None = None

    def rig_list(self) -> list[MedialRig]:
        return [self.rigs[k] for k in sorted(self.rigs) if k in self.posed]

    def apply_sample(self, sim: Simulation, t: float,
                     joints: dict[str, JointPose], events: list) -> None:
        frame_dt = (t - self.last_t) if self.last_t is not None else None
        self.last_t = t
        for ev in events:
            if ev.type == "tool_select":
                self.rigs[ev.hand] = make_rig(ev.tool)
                self.posed.discard(ev.hand)
            else:
                self.gestures.handle(ev, sim.particles.x)
        if joints:
            self.history.push(t, joints)
        smoothed = self.history.smooth(t)
        for name, rig in self.rigs.items():
            prefix = name + "/"
            jm = {}
            for jname in rig.joints:
                key = prefix + jname
                if key in smoothed:
                    pos, quat = smoothed[key]
                    jm[jname] = (pos, np.asarray(quat) if quat is not None else None)
            if jm:
                missing = set(rig.joints) - {k for k in jm}
                if missing:
                    raise TrajectoryError(
                        f"rig {name!r}: pose missing joints {sorted(missing)}")
                rig.pose(jm, frame_dt)
                self.posed.add(name)
        if self.gestures.active:
            sim.force_field = self.gestures.build_field(
                sim.particles.x, frame_dt if frame_dt else sim.config.frame_dt())
        else:
            sim.force_field = None


def replay(config: SceneConfig, trajectory: Trajectory, frames: int,
           sim: Simulation | None = None,
           on_frame=None) -> ReplayResult:
    """Deterministically replay `frames` trajectory samples.

    Per frame: smooth poses, pose rigs, update the active region, run
    substeps_per_frame substeps, record metrics. on_frame(k, sim, world)
    runs after each frame (surfacing exports hook in there).
    """
    if frames > len(trajectory.samples) and trajectory.samples:
        raise TrajectoryError(
            f"trajectory has {len(trajectory.samples)} samples, {frames} frames requested")
    if sim is None:
        sim = Simulation(config)
    driver = InputDriver(config, trajectory.rigs)
    metrics: list[FrameMetrics] = []
    frame_seconds: list[float] = []
    for k in range(frames):
        t0 = _time.perf_counter()
        if trajectory.samples:
            s = trajectory.samples[k]
            driver.apply_sample(sim, s.t, s.joints, s.events)
        rig_list = driver.rig_list()
        if rig_list:
            sim.update_active_region(rig_list)
        world = sim.make_world(rig_list) if rig_list else None
        adjusted = 0
        for _ in range(config.substeps_per_frame):
            st = sim.substep(world)
            adjusted += st.adjusted
        frame_seconds.append(_time.perf_counter() - t0)
        metrics.append(FrameMetrics(
            frame=k, t=sim.time, particles=sim.particles.count,
            active_particles=int(sim.particles.active.sum()),
            mass_total=sim.total_mass(),
            max_penetration=sim.max_penetration(world),
            adjusted=adjusted, clamp_warnings=sim.clamp_warnings,
        ))
        if on_frame is not None:
            on_frame(k, sim, world)
    return ReplayResult(sim=sim, metrics=metrics, frame_seconds=frame_seconds)
