"""Scripted session client.

Replays a trajectory over the wire in lockstep: one pose per frame,
waiting for that frame's stats before sending the next. Against a
stepped-mode server this reproduces the offline replay exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from websockets.sync.client import connect

from ..interaction import Trajectory
from ..surfacing import SurfaceMesh
from . import protocol as proto

RECV_TIMEOUT = 60.0


class SessionClientError(RuntimeError):
    pass


@dataclass
class WireReplayResult:
    frames: int
    meshes: list[SurfaceMesh]
    mesh_frame_index: int
    stats: list[dict] = field(default_factory=list)


class SessionClient:
    """Thin synchronous protocol client (used by the CLI and tests)."""

    def __init__(self, url: str):
        self.url = url
        self.ws = connect(url, max_size=256 * 1024 * 1024, open_timeout=30)
        self.seq = 0
        self.latest_mesh: tuple[int, list[SurfaceMesh]] | None = None
        self.stats_log: list[dict] = []
        self.config: dict | None = None

    def close(self) -> None:
        self.ws.close()

    def __enter__(self) -> "SessionClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _next_id(self) -> int:
        self.seq += 1
        return self.seq

    def send(self, payload: dict) -> int:
        msg_id = self._next_id()
        self.ws.send(json.dumps({"id": msg_id, **payload}))
        return msg_id

    def _recv_one(self):
        raw = self.ws.recv(timeout=RECV_TIMEOUT)
        if isinstance(raw, bytes):
            self.latest_mesh = proto.decode_mesh_frame(raw)
            return ("mesh", self.latest_mesh)
        doc = json.loads(raw)
        if doc.get("type") == "stats":
            self.stats_log.append(doc)
        if doc.get("type") == "error":
            raise SessionClientError(f"server error [{doc.get('code')}]: {doc.get('message')}")
        return (doc["type"], doc)

    def wait_for(self, want_type: str, ack: int | None = None) -> dict:
        while True:
            kind, payload = self._recv_one()
            if kind == "mesh":
                continue
            if kind == want_type and (ack is None or payload.get("ack") == ack):
                return payload

    def hello(self) -> dict:
        mid = self.send({"type": "hello", "protocol_version": proto.PROTOCOL_VERSION})
        ready = self.wait_for("ready", ack=mid)
        self.config = ready["config"]
        return ready

    def load_scene(self, scene: dict) -> dict:
        mid = self.send({"type": "load_scene", "scene": scene})
        ready = self.wait_for("ready", ack=mid)
        self.config = ready["config"]
        return ready

    def pose_update(self, t: float, joints: dict) -> None:
        """Send one pose and wait for the frame it triggers."""
        self.send({"type": "pose_update", "time": t, "joints": joints})
        self.wait_for("stats")

    def gesture(self, event: dict) -> None:
        mid = self.send({"type": "gesture", "event": event})
        self.wait_for("ack", ack=mid)

    def edit(self, op: dict) -> None:
        mid = self.send({"type": "edit", "op": op})
        self.wait_for("ack", ack=mid)

    def material_update(self, object_id: int, params: dict) -> None:
        mid = self.send({"type": "material_update", "object": object_id, "params": params})
        self.wait_for("ack", ack=mid)

    def step(self) -> None:
        self.send({"type": "step"})
        self.wait_for("stats")

    def snapshot(self) -> int:
        mid = self.send({"type": "snapshot_request"})
        return self.wait_for("snapshot_saved", ack=mid)["snapshot_id"]

    def restore(self, snapshot_id: int) -> None:
        mid = self.send({"type": "restore_request", "snapshot_id": snapshot_id})
        self.wait_for("ack", ack=mid)

    def request_mesh(self) -> tuple[int, list[SurfaceMesh]]:
        before = self.latest_mesh[0] if self.latest_mesh else -1
        self.send({"type": "mesh_request"})
        while self.latest_mesh is None or self.latest_mesh[0] <= before \
                or self.latest_mesh[0] < 0:
            kind, _ = self._recv_one()
            if kind == "mesh":
                break
        return self.latest_mesh


def replay_over_wire(url: str, trajectory: Trajectory, frames: int,
                     scene: dict | None = None) -> WireReplayResult:
    """Lockstep wire replay; returns the final requested mesh."""
    if frames > len(trajectory.samples):
        raise SessionClientError(
            f"trajectory has {len(trajectory.samples)} samples, {frames} frames requested")
    with SessionClient(url) as client:
        client.hello()
        if scene is not None:
            client.load_scene(scene)
        for ev in ({"type": "tool_select", "hand": hand, "tool": tool}
                   for hand, tool in trajectory.rigs.items()):
            client.gesture(ev)
        for k in range(frames):
            s = trajectory.samples[k]
            for ev in s.events:
                client.gesture(json.loads(ev.model_dump_json()))
            joints = {name: json.loads(j.model_dump_json()) for name, j in s.joints.items()}
            client.pose_update(s.t, joints)
        frame_idx, meshes = client.request_mesh()
        return WireReplayResult(frames=frames, meshes=meshes,
                                mesh_frame_index=frame_idx, stats=client.stats_log)
