"""Session frame loop.

All simulation state lives on one loop thread; network handlers only
enqueue messages. Messages received while frame k runs apply at the
start of frame k+1, so a lockstep client (one pose per stats reply)
reproduces an offline replay exactly.

Two pacing modes: "realtime" advances frames continuously at a target
rate; "stepped" advances one frame per received pose_update/step
message (used by the scripted client and the determinism tests).
"""

from __future__ import annotations

import queue
import threading
import time
from collections import deque
from concurrent.futures import Future
from dataclasses import dataclass
from pathlib import Path

from ..config import SceneConfig, parse_scene
from ..engine import Simulation
from ..interaction import EditError, InputDriver, ProtocolError, Trajectory, TrajectorySample, apply_edit
from ..snapshots import load_snapshot_file, restore_snapshot, save_snapshot_file, take_snapshot
from ..surfacing import accumulate_density, extract_surfaces, laplacian_smooth
from . import protocol as proto

DEFAULT_RIGS = {"tool": "sphere"}


@dataclass
class Inbound:
    client_id: int
    message: object
    future: Future | None = None


@dataclass
class SessionStats:
    frame: int = 0
    sim_time: float = 0.0
    steps_per_s: float = 0.0
    particles: int = 0
    active_particles: int = 0
    max_penetration: float = 0.0
    snapshot_count: int = 0

    def to_msg(self, msg_id: int) -> proto.StatsMsg:
        return proto.StatsMsg(id=msg_id, frame=self.frame, sim_time=self.sim_time,
                              steps_per_s=self.steps_per_s, particles=self.particles,
                              active_particles=self.active_particles,
                              max_penetration=self.max_penetration,
                              snapshot_count=self.snapshot_count)


class SessionLoop:
    """Runs the engine as a steerable session on its own thread."""

    def __init__(self, config: SceneConfig, mode: str = "realtime", fps: float = 30.0,
                 autosave_interval: float = 10.0, snapshot_ring: int = 10,
                 record_timeline: bool = True, snapshot_dir=None):
        if mode not in ("realtime", "stepped"):
            raise ValueError(f"unknown session mode {mode!r}")
        self.config = config
        self.mode = mode
        self.fps = fps
        self.autosave_interval = autosave_interval
        self.snapshot_dir = Path(snapshot_dir) if snapshot_dir else None
        if self.snapshot_dir:
            self.snapshot_dir.mkdir(parents=True, exist_ok=True)
        self.inbox: queue.Queue[Inbound] = queue.Queue()
        # both installed by the app layer
        self.broadcast = lambda kind, payload: None
        self.send_to = lambda client_id, kind, payload: None
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self.snapshots: deque = deque(maxlen=snapshot_ring)
        self.next_snapshot_id = 1
        self.frame = 0
        self.stats = SessionStats()
        self.lock = threading.Lock()          # guards published artifacts below
        self.latest_mesh_frame: bytes | None = None
        self.latest_meshes = []
        self.record_timeline = record_timeline
        self.timeline: list[TrajectorySample] = []
        self._reset_state()

    def _reset_state(self) -> None:
        self.sim = Simulation(self.config)
        self.driver = InputDriver(self.config, dict(DEFAULT_RIGS))
        self.initial = take_snapshot(self.sim, 0, 0.0)
        self._pending_pose: proto.PoseUpdateMsg | None = None
        self._pending_events: list = []
        self._last_autosave = time.monotonic()
        self.frame = 0

    # ------------------------------------------------------------------
    # lifecycle

    def start(self) -> None:
        self._thread = threading.Thread(target=self._run, name="clayworks-session",
                                        daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)

    def submit(self, client_id: int, message) -> Future:
        """Enqueue a message from any thread; the future resolves to the
        reply messages once the loop has processed it."""
        fut: Future = Future()
        self.inbox.put(Inbound(client_id, message, fut))
        return fut

    # ------------------------------------------------------------------
    # frame loop

    def _run(self) -> None:
        frame_budget = 1.0 / self.fps if self.fps > 0 else 0.0
        while not self._stop.is_set():
            start = time.monotonic()
            advance = self._drain_inbox()
            if self.mode == "stepped" and not advance:
                continue  # _drain_inbox blocked on the queue with a timeout
            try:
                self._frame()
            except Exception as e:  # engine faults surface as errors, loop survives
                self.broadcast("error", {"code": "internal", "message": str(e),
                                         "ack": None})
            if self.mode == "realtime" and frame_budget > 0:
                elapsed = time.monotonic() - start
                if elapsed < frame_budget:
                    time.sleep(frame_budget - elapsed)

    def _drain_inbox(self) -> bool:
        advance = self.mode == "realtime"
        try:
            block = self.mode == "stepped"
            while True:
                item = self.inbox.get(timeout=0.1) if block else self.inbox.get_nowait()
                block = False  # only block for the first item
                if self._handle(item):
                    advance = True
        except queue.Empty:
            pass
        return advance

    def _handle(self, item: Inbound) -> bool:
        """Apply one message; returns True if it advances a frame (stepped)."""
        msg = item.message
        replies: list = []
        advance = False
        try:
            if isinstance(msg, proto.HelloMsg):
                if msg.protocol_version != proto.PROTOCOL_VERSION:
                    raise ProtocolError(
                        f"protocol version {msg.protocol_version} unsupported "
                        f"(server speaks {proto.PROTOCOL_VERSION})")
                replies.append(("ready", {"ack": msg.id,
                                          "config": self.config.model_dump(mode="json")}))
            elif isinstance(msg, proto.LoadSceneMsg):
                self.config = parse_scene(msg.scene)
                self._reset_state()
                self._publish_mesh()
                replies.append(("ready", {"ack": msg.id,
                                          "config": self.config.model_dump(mode="json")}))
            elif isinstance(msg, proto.PoseUpdateMsg):
                self._pending_pose = msg
                advance = True
                replies.append(("ack", {"ack": msg.id}))
            elif isinstance(msg, proto.GestureMsg):
                self._pending_events.append(msg.event)
                replies.append(("ack", {"ack": msg.id}))
            elif isinstance(msg, proto.MaterialUpdateMsg):
                self.sim.set_object_material(msg.object, msg.params)
                replies.append(("ack", {"ack": msg.id}))
            elif isinstance(msg, proto.EditMsg):
                apply_edit(self.sim, msg.op, initial=self.initial)
                self._publish_mesh()
                replies.append(("ack", {"ack": msg.id}))
            elif isinstance(msg, proto.SnapshotRequestMsg):
                snap_id = self._save_snapshot()
                replies.append(("snapshot_saved", {"ack": msg.id, "snapshot_id": snap_id}))
            elif isinstance(msg, proto.RestoreRequestMsg):
                self._restore(msg.snapshot_id)
                replies.append(("ack", {"ack": msg.id}))
            elif isinstance(msg, proto.StepMsg):
                advance = True
                replies.append(("ack", {"ack": msg.id}))
            elif isinstance(msg, proto.MeshRequestMsg):
                self._publish_mesh()
                replies.append(("ack", {"ack": msg.id}))
            else:
                raise ProtocolError(f"unhandled message type {type(msg).__name__}")
        except (ProtocolError, EditError, KeyError, ValueError) as e:
            code = "not_found" if isinstance(e, KeyError) else "bad_request"
            if isinstance(e, ProtocolError):
                code = "protocol"
            replies = [("error", {"ack": getattr(msg, "id", None), "code": code,
                                  "message": str(e)})]
            advance = False
        if item.future is not None:
            item.future.set_result(replies)
        for kind, payload in replies:
            self.send_to(item.client_id, kind, payload)
        return advance

    def _frame(self) -> None:
        t0 = time.perf_counter()
        pose = self._pending_pose
        events = self._pending_events
        self._pending_pose = None
        self._pending_events = []
        t = pose.time if pose is not None else self.sim.time
        joints = pose.joints if pose is not None else {}
        if self.record_timeline and (joints or events):
            self.timeline.append(TrajectorySample(t=t, joints=joints, events=events))
        if joints or events:
            try:
                self.driver.apply_sample(self.sim, t, joints, events)
            except (ProtocolError, EditError, KeyError, ValueError) as e:
                # bad input never kills the loop; answer and keep simulating
                self.broadcast("error", {"code": "protocol", "message": str(e),
                                         "ack": None})
        rigs = self.driver.rig_list()
        if rigs:
            self.sim.update_active_region(rigs)
        world = self.sim.make_world(rigs) if rigs else None
        adjusted = 0
        for _ in range(self.config.substeps_per_frame):
            st = self.sim.substep(world)
            adjusted += st.adjusted
        self.frame += 1
        elapsed = time.perf_counter() - t0
        self.stats = SessionStats(
            frame=self.frame, sim_time=self.sim.time,
            steps_per_s=self.config.substeps_per_frame / max(elapsed, 1e-9),
            particles=self.sim.particles.count,
            active_particles=int(self.sim.particles.active.sum()),
            max_penetration=self.sim.max_penetration(world),
            snapshot_count=len(self.snapshots))
        self.broadcast("stats", self.stats)
        if self.frame % self.config.surfacing.cadence == 0:
            self._publish_mesh()
        if (self.mode == "realtime" and self.autosave_interval > 0
                and time.monotonic() - self._last_autosave >= self.autosave_interval):
            self._save_snapshot()
            self._last_autosave = time.monotonic()

    # ------------------------------------------------------------------
    # surfacing / snapshots

    def build_meshes(self):
        surf = self.config.surfacing
        fields = accumulate_density(self.sim.particles, surf.resolution,
                                    self.config.domain_size)
        meshes = extract_surfaces(fields, surf.iso, surf.iso_fraction)
        return [laplacian_smooth(m, surf.smooth_iterations, surf.smooth_strength)
                for m in meshes]

    def _publish_mesh(self) -> None:
        meshes = self.build_meshes()
        frame_bytes = proto.encode_mesh_frame(self.frame, meshes)
        with self.lock:
            self.latest_meshes = meshes
            self.latest_mesh_frame = frame_bytes
        self.broadcast("mesh", frame_bytes)

    def _save_snapshot(self) -> int:
        snap_id = self.next_snapshot_id
        self.next_snapshot_id += 1
        snap = take_snapshot(self.sim, snap_id, self.sim.time)
        self.snapshots.append(snap)
        if self.snapshot_dir:
            save_snapshot_file(snap, self.snapshot_dir / f"{snap_id}.snapshot")
        return snap_id

    def _find_snapshot(self, snapshot_id: int):
        for snap in self.snapshots:
            if snap.snapshot_id == snapshot_id:
                return snap
        if self.snapshot_dir:
            path = self.snapshot_dir / f"{snapshot_id}.snapshot"
            if path.exists():
                return load_snapshot_file(path)
        return None

    def _restore(self, snapshot_id: int) -> None:
        snap = self._find_snapshot(snapshot_id)
        if snap is None:
            raise KeyError(f"snapshot {snapshot_id} not found")
        restore_snapshot(self.sim, snap)
        self._pending_pose = None
        self._pending_events = []
        self._publish_mesh()

    def recorded_trajectory(self) -> Trajectory:
        return Trajectory(rigs=dict(DEFAULT_RIGS), samples=list(self.timeline))
