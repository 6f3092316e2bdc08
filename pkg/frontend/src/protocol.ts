// Session protocol envelope: JSON text frames {id, type, ...} in both
// directions (ids strictly increasing per direction), binary mesh frames
// server-to-client. Mirrors docs/formats.md.

export const PROTOCOL_VERSION = 1;

export type Vec3 = [number, number, number];
export type Quat = [number, number, number, number];

export interface JointPose {
  p: Vec3;
  q?: Quat;
}

export type GestureEvent =
  | { type: "pinch_start"; hand: string; position: Vec3; radius?: number; force_ratio?: number }
  | { type: "pinch_move"; hand: string; position: Vec3 }
  | { type: "pinch_end"; hand: string }
  | { type: "tool_select"; hand: string; tool: string };

export type EditOp =
  | { type: "merge"; ids: number[]; unify_categories?: boolean }
  | { type: "copy"; id: number; offset: Vec3 }
  | { type: "delete"; id: number }
  | { type: "reset" }
  | { type: "scale_visual"; id: number; factor: number }
  | { type: "move"; id: number; offset: Vec3 };

export type ClientMessage =
  | { id: number; type: "hello"; protocol_version: number }
  | { id: number; type: "load_scene"; scene: unknown }
  | { id: number; type: "pose_update"; time: number; joints: Record<string, JointPose> }
  | { id: number; type: "gesture"; event: GestureEvent }
  | { id: number; type: "material_update"; object: number; params: Record<string, number> }
  | { id: number; type: "edit"; op: EditOp }
  | { id: number; type: "snapshot_request" }
  | { id: number; type: "restore_request"; snapshot_id: number }
  | { id: number; type: "step" }
  | { id: number; type: "mesh_request" };

export interface ReadyMsg {
  id: number;
  type: "ready";
  ack: number;
  protocol_version: number;
  config: Record<string, unknown>;
}

export interface AckMsg {
  id: number;
  type: "ack";
  ack: number;
}

export interface StatsMsg {
  id: number;
  type: "stats";
  frame: number;
  sim_time: number;
  steps_per_s: number;
  particles: number;
  active_particles: number;
  max_penetration: number;
  snapshot_count: number;
}

export interface SnapshotSavedMsg {
  id: number;
  type: "snapshot_saved";
  ack: number;
  snapshot_id: number;
}

export interface ErrorMsg {
  id: number;
  type: "error";
  code: string;
  message: string;
  ack?: number | null;
}

export type ServerMessage = ReadyMsg | AckMsg | StatsMsg | SnapshotSavedMsg | ErrorMsg;

const SERVER_TYPES = new Set(["ready", "ack", "stats", "snapshot_saved", "error"]);

export function parseServerMessage(text: string): ServerMessage {
  const doc = JSON.parse(text) as { id?: unknown; type?: unknown };
  if (typeof doc.id !== "number" || typeof doc.type !== "string" || !SERVER_TYPES.has(doc.type)) {
    throw new Error(`malformed server message: ${text.slice(0, 120)}`);
  }
  return doc as ServerMessage;
}

export function encodeMessage(msg: ClientMessage): string {
  return JSON.stringify(msg);
}

/** Allocates strictly increasing client message ids. */
export class MessageIds {
  private next = 0;
  allocate(): number {
    this.next += 1;
    return this.next;
  }
}
