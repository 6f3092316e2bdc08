import json
import threading
import time

import numpy as np
import pytest
import uvicorn

from clayworks.config import parse_scene
from clayworks.service import protocol as proto
from clayworks.service.app import create_app
from clayworks.service.client import SessionClient, SessionClientError
from clayworks.surfacing import SurfaceMesh


def small_scene(**overrides):
    doc = {
        "gravity": [0, 0, 0], "damping": 2.0, "boundary": "none",
        "surfacing": {"resolution": 48, "cadence": 2},
        "shapes": [{"type": "sphere", "center": [0.5, 0.5, 0.5], "radius": 0.14}],
    }
    doc.update(overrides)
    return parse_scene(doc)


class ServerHandle:
    def __init__(self, config, mode="stepped"):
        self.app = create_app(config, mode=mode)
        self.uv = uvicorn.Server(uvicorn.Config(self.app, host="127.0.0.1", port=0,
                                                log_level="error"))
        self.thread = threading.Thread(target=self.uv.run, daemon=True)
        self.thread.start()
        deadline = time.time() + 30
        while not self.uv.started:
            if time.time() > deadline:
                raise RuntimeError("server failed to start")
            time.sleep(0.02)
        self.port = self.uv.servers[0].sockets[0].getsockname()[1]
        self.ws_url = f"ws://127.0.0.1:{self.port}/session"
        self.http_url = f"http://127.0.0.1:{self.port}"

    def stop(self):
        self.uv.should_exit = True
        self.thread.join(timeout=10)


@pytest.fixture(scope="module")
def server():
    handle = ServerHandle(small_scene())
    yield handle
    handle.stop()


def poke(client, frames=4, depth=0.004):
    for k in range(frames):
        client.pose_update(k * 5e-4 + client.seq * 1e-3,
                           {"tool/tool": {"p": [0.5, 0.66 - depth * k, 0.5]}})


def mesh_arrays(meshes):
    return [(m.category_id, m.vertices.copy(), m.triangles.copy()) for m in meshes]


def assert_same_meshes(a, b):
    assert len(a) == len(b)
    for (ca, va, ta), (cb, vb, tb) in zip(mesh_arrays(a), mesh_arrays(b)):
        assert ca == cb
        np.testing.assert_array_equal(va, vb)
        np.testing.assert_array_equal(ta, tb)


# ---------------------------------------------------------------------------

def test_hello_ready_echoes_config(server):
    with SessionClient(server.ws_url) as c:
        ready = c.hello()
        assert ready["protocol_version"] == proto.PROTOCOL_VERSION
        assert ready["config"]["grid_resolution"] == 64
        assert ready["ack"] == 1


def test_protocol_version_mismatch_surfaces_error(server):
    with SessionClient(server.ws_url) as c:
        c.send({"type": "hello", "protocol_version": 999})
        with pytest.raises(SessionClientError, match="protocol"):
            c.wait_for("ready")
        # connection stays alive after a protocol error
        assert c.hello()["protocol_version"] == proto.PROTOCOL_VERSION


def test_resting_scene_meshes_identical(server):
    with SessionClient(server.ws_url) as c:
        c.hello()
        c.step()
        _, m1 = c.request_mesh()
        for _ in range(3):
            c.step()
        _, m2 = c.request_mesh()
        assert_same_meshes(m1, m2)


def test_snapshot_poke_restore_restores_mesh(server):
    with SessionClient(server.ws_url) as c:
        c.hello()
        c.step()
        snap_id = c.snapshot()
        _, before = c.request_mesh()
        poke(c, frames=6)
        _, poked = c.request_mesh()
        assert len(poked) == len(before)
        # the poke must actually change the mesh
        changed = any(p[1].shape != b[1].shape or not np.array_equal(p[1], b[1])
                      for p, b in zip(mesh_arrays(poked), mesh_arrays(before)))
        assert changed
        c.restore(snap_id)
        _, restored = c.request_mesh()
        assert_same_meshes(restored, before)


def test_restore_unknown_id_not_found(server):
    with SessionClient(server.ws_url) as c:
        c.hello()
        c.send({"type": "restore_request", "snapshot_id": 424242})
        with pytest.raises(SessionClientError, match="not_found|not found"):
            c.wait_for("ack")
        assert c.hello()  # still alive


def test_two_snapshots_restore_ordering(server):
    with SessionClient(server.ws_url) as c:
        c.hello()
        older = c.snapshot()
        poke(c, frames=5)
        newer = c.snapshot()
        _, newer_mesh = c.request_mesh()
        c.restore(older)
        c.restore(newer)
        _, now = c.request_mesh()
        assert_same_meshes(now, newer_mesh)


def test_malformed_frame_drops_client(server):
    with SessionClient(server.ws_url) as c:
        c.hello()
        c.ws.send("this is not json")
        with pytest.raises(Exception):
            for _ in range(10):
                c._recv_one()
    # fresh connections still work
    with SessionClient(server.ws_url) as c2:
        assert c2.hello()


def test_gesture_protocol_error_keeps_connection(server):
    with SessionClient(server.ws_url) as c:
        c.hello()
        c.send({"type": "gesture",
                "event": {"type": "pinch_move", "hand": "r", "position": [0.5, 0.5, 0.5]}})
        # the violation surfaces as an Error when the frame applies the event
        with pytest.raises(SessionClientError, match="pinch_move"):
            c.step()
        assert c.hello()


def test_material_update_and_edit_ack(server):
    with SessionClient(server.ws_url) as c:
        c.hello()
        c.material_update(0, {"mu": 5000.0, "tau_y": 100.0})
        c.edit({"type": "move", "id": 0, "offset": [0.02, 0.0, 0.0]})
        c.edit({"type": "move", "id": 0, "offset": [-0.02, 0.0, 0.0]})


def test_stats_have_increasing_ids_and_frames(server):
    with SessionClient(server.ws_url) as c:
        c.hello()
        start = len(c.stats_log)
        for _ in range(3):
            c.step()
        frames = [s["frame"] for s in c.stats_log[start:]]
        ids = [s["id"] for s in c.stats_log[start:]]
        assert frames == sorted(frames)
        assert ids == sorted(ids)
        assert len(set(ids)) == len(ids)


def test_rest_endpoints(server):
    import httpx
    health = httpx.get(f"{server.http_url}/health").json()
    assert health["status"] == "ok"
    cfg = httpx.get(f"{server.http_url}/config").json()
    assert cfg["grid_resolution"] == 64
    saved = httpx.post(f"{server.http_url}/snapshots").json()
    assert saved["snapshot_id"] >= 1
    listed = httpx.get(f"{server.http_url}/snapshots").json()
    assert any(s["snapshot_id"] == saved["snapshot_id"] for s in listed)
    restored = httpx.post(f"{server.http_url}/restore/{saved['snapshot_id']}")
    assert restored.status_code == 200
    missing = httpx.post(f"{server.http_url}/restore/99999")
    assert missing.status_code == 404
    obj = httpx.get(f"{server.http_url}/mesh.obj").text
    assert obj.startswith("o category_")
    stats = httpx.get(f"{server.http_url}/stats").json()
    assert stats["particles"] > 0


# ---------------------------------------------------------------------------
# codec

def test_mesh_frame_codec_roundtrip():
    rng = np.random.default_rng(0)
    meshes = [
        SurfaceMesh(rng.random((10, 3)).astype(np.float32).astype(np.float64),
                    rng.integers(0, 10, (7, 3)).astype(np.int64), category_id=2),
        SurfaceMesh(rng.random((4, 3)).astype(np.float32).astype(np.float64),
                    rng.integers(0, 4, (2, 3)).astype(np.int64), category_id=9),
    ]
    blob = proto.encode_mesh_frame(1234, meshes)
    assert blob[:4] == b"CLMF"
    frame, out = proto.decode_mesh_frame(blob)
    assert frame == 1234
    assert_same_meshes(out, meshes)
    # byte-exact re-encode
    assert proto.encode_mesh_frame(1234, out) == blob


def test_mesh_frame_rejects_garbage():
    with pytest.raises(ValueError, match="magic"):
        proto.decode_mesh_frame(b"XXXX" + b"\x00" * 32)


def test_snapshot_dir_survives_ring_eviction(tmp_path):
    handle = ServerHandle(small_scene())
    try:
        # a dedicated server with a tiny ring backed by disk
        from clayworks.service.session import SessionLoop
        loop: SessionLoop = handle.app.state.session
        loop.snapshots = __import__("collections").deque(maxlen=2)
        loop.snapshot_dir = tmp_path
        with SessionClient(handle.ws_url) as c:
            c.hello()
            first = c.snapshot()
            poke(c, frames=2)
            for _ in range(3):
                c.snapshot()  # evicts `first` from the in-memory ring
            assert all(s.snapshot_id != first for s in loop.snapshots)
            c.restore(first)  # found on disk
    finally:
        handle.stop()


def test_mesh_drop_policy_keeps_stats():
    import asyncio

    from clayworks.service.app import ClientChannel
    loop = asyncio.new_event_loop()
    try:
        ch = ClientChannel(loop)
        for i in range(6):
            ch.push("mesh", b"m%d" % i)
        ch.push("text", "stats1")
        kinds = [k for k, _ in ch.items]
        # oldest mesh frames dropped first, never the control/stats messages
        assert kinds.count("mesh") == 3
        assert "text" in kinds
        payloads = [p for k, p in ch.items if k == "mesh"]
        assert payloads == [b"m3", b"m4", b"m5"]
    finally:
        loop.close()


def test_client_message_parsing():
    msg = proto.parse_client_message(json.dumps(
        {"id": 5, "type": "pose_update", "time": 0.25,
         "joints": {"tool/tool": {"p": [0.1, 0.2, 0.3]}}}))
    assert msg.type == "pose_update"
    assert msg.joints["tool/tool"].p == (0.1, 0.2, 0.3)
    with pytest.raises(Exception):
        proto.parse_client_message('{"id": 1, "type": "nope"}')
