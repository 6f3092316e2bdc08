"""Session wire protocol.

Control messages are JSON text frames with an envelope {"id", "type",
...}; ids increase strictly per direction. Mesh updates are binary
frames in the little-endian layout below (documented byte-exactly in
docs/formats.md):

    magic   4 bytes  b"CLMF"
    frame   u64      frame index the mesh was built at
    count   u32      number of category blocks
    per category:
      category_id u32, vertex_count u32, index_count u32,
      vertices f32 * 3 * vertex_count, indices u32 * index_count
"""

from __future__ import annotations

import struct
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, Field, TypeAdapter

from ..interaction import EditOp, GestureEvent, JointPose
from ..surfacing import SurfaceMesh

PROTOCOL_VERSION = 1
MESH_MAGIC = b"CLMF"


# ---------------------------------------------------------------------------
# client -> server

class HelloMsg(BaseModel):
    id: int
    type: Literal["hello"] = "hello"
    protocol_version: int


class LoadSceneMsg(BaseModel):
    id: int
    type: Literal["load_scene"] = "load_scene"
    scene: dict


class PoseUpdateMsg(BaseModel):
    id: int
    type: Literal["pose_update"] = "pose_update"
    time: float
    joints: dict[str, JointPose] = Field(default_factory=dict)


class GestureMsg(BaseModel):
    id: int
    type: Literal["gesture"] = "gesture"
    event: GestureEvent


class MaterialUpdateMsg(BaseModel):
    id: int
    type: Literal["material_update"] = "material_update"
    object: int
    params: dict[str, float]


class EditMsg(BaseModel):
    id: int
    type: Literal["edit"] = "edit"
    op: EditOp


class SnapshotRequestMsg(BaseModel):
    id: int
    type: Literal["snapshot_request"] = "snapshot_request"


class RestoreRequestMsg(BaseModel):
    id: int
    type: Literal["restore_request"] = "restore_request"
    snapshot_id: int


class StepMsg(BaseModel):
    id: int
    type: Literal["step"] = "step"


class MeshRequestMsg(BaseModel):
    id: int
    type: Literal["mesh_request"] = "mesh_request"


ClientMessage = Annotated[
    Union[HelloMsg, LoadSceneMsg, PoseUpdateMsg, GestureMsg, MaterialUpdateMsg,
          EditMsg, SnapshotRequestMsg, RestoreRequestMsg, StepMsg, MeshRequestMsg],
    Field(discriminator="type")]

CLIENT_ADAPTER: TypeAdapter = TypeAdapter(ClientMessage)


# ---------------------------------------------------------------------------
# server -> client

class ReadyMsg(BaseModel):
    id: int
    type: Literal["ready"] = "ready"
    ack: int
    protocol_version: int = PROTOCOL_VERSION
    config: dict


class AckMsg(BaseModel):
    id: int
    type: Literal["ack"] = "ack"
    ack: int


class StatsMsg(BaseModel):
    id: int
    type: Literal["stats"] = "stats"
    frame: int
    sim_time: float
    steps_per_s: float
    particles: int
    active_particles: int
    max_penetration: float
    snapshot_count: int = 0


class SnapshotSavedMsg(BaseModel):
    id: int
    type: Literal["snapshot_saved"] = "snapshot_saved"
    ack: int
    snapshot_id: int


class ErrorMsg(BaseModel):
    id: int
    type: Literal["error"] = "error"
    code: str
    message: str
    ack: int | None = None


ServerMessage = Annotated[
    Union[ReadyMsg, AckMsg, StatsMsg, SnapshotSavedMsg, ErrorMsg],
    Field(discriminator="type")]

SERVER_ADAPTER: TypeAdapter = TypeAdapter(ServerMessage)


def parse_client_message(raw: str | bytes) -> ClientMessage:
    return CLIENT_ADAPTER.validate_json(raw)


def parse_server_message(raw: str | bytes) -> ServerMessage:
    return SERVER_ADAPTER.validate_json(raw)


def dump_message(msg: BaseModel) -> str:
    return msg.model_dump_json()


# ---------------------------------------------------------------------------
# binary mesh frames

def encode_mesh_frame(frame: int, meshes: list[SurfaceMesh]) -> bytes:
    chunks = [MESH_MAGIC, struct.pack("<QI", frame, len(meshes))]
    for m in meshes:
        v = np.ascontiguousarray(m.vertices, dtype="<f4")
        t = np.ascontiguousarray(m.triangles.reshape(-1), dtype="<u4")
        chunks.append(struct.pack("<III", m.category_id, v.shape[0], t.shape[0]))
        chunks.append(v.tobytes())
        chunks.append(t.tobytes())
    return b"".join(chunks)


def decode_mesh_frame(data: bytes) -> tuple[int, list[SurfaceMesh]]:
    if data[:4] != MESH_MAGIC:
        raise ValueError(f"bad mesh frame magic {data[:4]!r}")
    frame, count = struct.unpack_from("<QI", data, 4)
    off = 16
    meshes = []
    for _ in range(count):
        cat, nv, ni = struct.unpack_from("<III", data, off)
        off += 12
        v = np.frombuffer(data, dtype="<f4", count=nv * 3, offset=off)
        off += nv * 12
        t = np.frombuffer(data, dtype="<u4", count=ni, offset=off)
        off += ni * 4
        meshes.append(SurfaceMesh(
            vertices=v.reshape(-1, 3).astype(np.float64),
            triangles=t.reshape(-1, 3).astype(np.int64),
            category_id=int(cat)))
    if off != len(data):
        raise ValueError(f"mesh frame has {len(data) - off} trailing bytes")
    return int(frame), meshes
