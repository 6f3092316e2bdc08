#!/usr/bin/env python3
"""Generate golden wire-format fixtures from the server-side codec.

Run from frontend/: python3 scripts/make_fixtures.py
The TypeScript tests assert byte-exact round trips against these files.
"""

import json
from pathlib import Path

import numpy as np

from clayworks.service import protocol as proto
from clayworks.surfacing import SurfaceMesh

OUT = Path(__file__).resolve().parent.parent / "test" / "fixtures"


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(12345)
    meshes = [
        SurfaceMesh(
            vertices=rng.random((23, 3)).astype(np.float32).astype(np.float64),
            triangles=rng.integers(0, 23, (31, 3)).astype(np.int64),
            category_id=0,
        ),
        SurfaceMesh(
            vertices=rng.random((7, 3)).astype(np.float32).astype(np.float64),
            triangles=rng.integers(0, 7, (5, 3)).astype(np.int64),
            category_id=4,
        ),
    ]
    frame = proto.encode_mesh_frame(777, meshes)
    (OUT / "mesh_frame.bin").write_bytes(frame)
    (OUT / "mesh_frame.json").write_text(json.dumps({
        "frame": 777,
        "blocks": [
            {
                "categoryId": int(m.category_id),
                "vertexCount": int(m.vertices.shape[0]),
                "indexCount": int(m.triangles.size),
                "vertexSum": float(np.float32(m.vertices.astype(np.float32).sum())),
                "indexSum": int(m.triangles.sum()),
            }
            for m in meshes
        ],
    }, indent=2))

    empty = proto.encode_mesh_frame(0, [])
    (OUT / "mesh_frame_empty.bin").write_bytes(empty)

    server_msgs = [
        proto.ReadyMsg(id=1, ack=1, config={"grid_resolution": 64}),
        proto.AckMsg(id=2, ack=3),
        proto.StatsMsg(id=3, frame=12, sim_time=0.03, steps_per_s=512.5, particles=1000,
                       active_particles=900, max_penetration=0.0, snapshot_count=2),
        proto.SnapshotSavedMsg(id=4, ack=7, snapshot_id=3),
        proto.ErrorMsg(id=5, code="not_found", message="snapshot 9 not found", ack=8),
    ]
    (OUT / "server_messages.jsonl").write_text(
        "\n".join(proto.dump_message(m) for m in server_msgs) + "\n")
    print(f"wrote fixtures to {OUT}")


if __name__ == "__main__":
    main()
