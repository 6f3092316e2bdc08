"""FastAPI service wrapping the session loop.

One session per process. The WebSocket endpoint /session carries the
control protocol (JSON text frames) and mesh updates (binary frames);
a small REST surface exposes health, config, stats, snapshots and the
current mesh for tooling. Slow consumers never stall the simulation:
each client has a bounded outbox and the oldest mesh frames are dropped
first (stats and control replies are never dropped).
"""

from __future__ import annotations

import asyncio
import threading
from collections import deque
from contextlib import asynccontextmanager

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel, ValidationError

from ..config import SceneConfig
from ..surfacing import obj_text
from . import protocol as proto
from .session import SessionLoop

MAX_QUEUED_MESHES = 3


class ClientChannel:
    """Thread-safe outbox bridging the session thread to one websocket."""

    def __init__(self, loop: asyncio.AbstractEventLoop):
        self.loop = loop
        self.lock = threading.Lock()
        self.items: deque = deque()
        self.event = asyncio.Event()
        self.closed = False

    def push(self, kind: str, payload) -> None:
        with self.lock:
            if kind == "mesh":
                mesh_count = sum(1 for k, _ in self.items if k == "mesh")
                if mesh_count >= MAX_QUEUED_MESHES:
                    for i, (k, _) in enumerate(self.items):
                        if k == "mesh":
                            del self.items[i]
                            break
            self.items.append((kind, payload))
        try:
            self.loop.call_soon_threadsafe(self.event.set)
        except RuntimeError:
            pass  # loop already closed

    async def drain(self) -> list:
        await self.event.wait()
        with self.lock:
            out = list(self.items)
            self.items.clear()
        self.event.clear()
        return out


class HealthResponse(BaseModel):
    status: str
    frame: int
    particles: int


class StatsResponse(BaseModel):
    frame: int
    sim_time: float
    steps_per_s: float
    particles: int
    active_particles: int
    max_penetration: float
    snapshot_count: int


class SnapshotInfo(BaseModel):
    snapshot_id: int
    timestamp: float


class SnapshotSavedResponse(BaseModel):
    snapshot_id: int


def create_app(config: SceneConfig, mode: str = "realtime", fps: float = 30.0,
               autosave_interval: float = 10.0, snapshot_dir=None) -> FastAPI:
    session = SessionLoop(config, mode=mode, fps=fps,
                          autosave_interval=autosave_interval, snapshot_dir=snapshot_dir)
    clients: dict[int, ClientChannel] = {}
    clients_lock = threading.Lock()
    server_seq = {"n": 0}

    def next_id() -> int:
        server_seq["n"] += 1
        return server_seq["n"]

    def broadcast(kind: str, payload) -> None:
        with clients_lock:
            chans = list(clients.values())
        if not chans:
            return
        if kind == "mesh":
            for ch in chans:
                ch.push("mesh", payload)
            return
        msg = _to_server_msg(kind, payload)
        raw = proto.dump_message(msg)
        for ch in chans:
            ch.push("text", raw)

    def _to_server_msg(kind: str, payload):
        mid = next_id()
        if kind == "stats":
            return payload.to_msg(mid)
        if kind == "ready":
            return proto.ReadyMsg(id=mid, **payload)
        if kind == "ack":
            return proto.AckMsg(id=mid, **payload)
        if kind == "snapshot_saved":
            return proto.SnapshotSavedMsg(id=mid, **payload)
        if kind == "error":
            return proto.ErrorMsg(id=mid, **payload)
        raise ValueError(f"unknown broadcast kind {kind}")

    def send_to(client_id: int, kind: str, payload) -> None:
        with clients_lock:
            ch = clients.get(client_id)
        if ch is None:
            return  # REST-submitted message; the future already carries replies
        ch.push("text", proto.dump_message(_to_server_msg(kind, payload)))

    session.broadcast = broadcast
    session.send_to = send_to

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        session.start()
        try:
            yield
        finally:
            session.stop()

    app = FastAPI(title="clayworks session", lifespan=lifespan)
    app.state.session = session

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", frame=session.frame,
                              particles=session.stats.particles)

    @app.get("/config")
    def get_config():
        return session.config.model_dump(mode="json")

    @app.get("/stats", response_model=StatsResponse)
    def get_stats():
        s = session.stats
        return StatsResponse(frame=s.frame, sim_time=s.sim_time,
                             steps_per_s=s.steps_per_s, particles=s.particles,
                             active_particles=s.active_particles,
                             max_penetration=s.max_penetration,
                             snapshot_count=s.snapshot_count)

    @app.get("/snapshots", response_model=list[SnapshotInfo])
    def list_snapshots():
        return [SnapshotInfo(snapshot_id=s.snapshot_id, timestamp=s.timestamp)
                for s in session.snapshots]

    @app.post("/snapshots", response_model=SnapshotSavedResponse)
    def save_snapshot():
        fut = session.submit(-1, proto.SnapshotRequestMsg(id=0))
        replies = fut.result(timeout=10.0)
        for kind, payload in replies:
            if kind == "snapshot_saved":
                return SnapshotSavedResponse(snapshot_id=payload["snapshot_id"])
        raise HTTPException(500, detail=str(replies))

    @app.post("/restore/{snapshot_id}")
    def restore(snapshot_id: int):
        fut = session.submit(-1, proto.RestoreRequestMsg(id=0, snapshot_id=snapshot_id))
        replies = fut.result(timeout=10.0)
        for kind, payload in replies:
            if kind == "error":
                raise HTTPException(404 if payload["code"] == "not_found" else 400,
                                    detail=payload["message"])
        return {"restored": snapshot_id}

    @app.get("/mesh.obj", response_class=PlainTextResponse)
    def mesh_obj():
        with session.lock:
            meshes = list(session.latest_meshes)
        if not meshes:
            meshes = session.build_meshes()
        return obj_text(meshes)

    @app.websocket("/session")
    async def ws_session(ws: WebSocket):
        await ws.accept()
        loop = asyncio.get_running_loop()
        channel = ClientChannel(loop)
        client_id = id(channel)
        with clients_lock:
            clients[client_id] = channel

        async def sender():
            try:
                while True:
                    for kind, payload in await channel.drain():
                        if kind == "mesh":
                            await ws.send_bytes(payload)
                        else:
                            await ws.send_text(payload)
            except (WebSocketDisconnect, RuntimeError):
                pass

        send_task = asyncio.create_task(sender())
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    msg = proto.parse_client_message(raw)
                except ValidationError as e:
                    err = proto.ErrorMsg(id=next_id(), code="bad_request",
                                         message=f"malformed message: {e.errors()[0]['msg']}")
                    await ws.send_text(proto.dump_message(err))
                    break  # malformed frames drop the client
                session.submit(client_id, msg)
        except WebSocketDisconnect:
            pass
        finally:
            send_task.cancel()
            with clients_lock:
                clients.pop(client_id, None)

    return app
