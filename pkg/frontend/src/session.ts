// Client session state. The UI never mutates simulation state locally:
// every change goes out as a protocol message, and the rendered mesh is
// always the highest-index frame the server has sent. Outbound messages
// queue up and flush at most once per animation tick.

import {
  ClientMessage,
  EditOp,
  GestureEvent,
  JointPose,
  MessageIds,
  PROTOCOL_VERSION,
  ServerMessage,
  StatsMsg,
  encodeMessage,
  parseServerMessage,
} from "./protocol.js";
import { MeshFrame, decodeMeshFrame } from "./meshFrame.js";

export type ConnectionStatus = "idle" | "connecting" | "ready" | "closed" | "error";

export interface SnapshotEntry {
  snapshotId: number;
}

type Listener = () => void;

// Omit must distribute over the message union to keep per-type fields
type OutboundMessage = ClientMessage extends infer M
  ? M extends ClientMessage ? Omit<M, "id"> : never
  : never;

export class ClientSessionState {
  status: ConnectionStatus = "idle";
  latestFrame: MeshFrame | null = null;
  stats: StatsMsg | null = null;
  config: Record<string, unknown> | null = null;
  snapshots: SnapshotEntry[] = [];
  lastError: string | null = null;
  meshDirty = false;

  private ids = new MessageIds();
  private queue: ClientMessage[] = [];
  private ws: WebSocket | null = null;
  private url = "";
  private backoffMs = 500;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;
  private listeners: Listener[] = [];
  private closedByUser = false;

  onChange(fn: Listener): void {
    this.listeners.push(fn);
  }

  private notify(): void {
    for (const fn of this.listeners) fn();
  }

  connect(url: string): void {
    this.url = url;
    this.closedByUser = false;
    this.open();
  }

  disconnect(): void {
    this.closedByUser = true;
    if (this.reconnectTimer !== null) clearTimeout(this.reconnectTimer);
    this.ws?.close();
    this.status = "closed";
    this.notify();
  }

  private open(): void {
    this.status = "connecting";
    this.notify();
    const ws = new WebSocket(this.url);
    ws.binaryType = "arraybuffer";
    this.ws = ws;
    ws.onopen = () => {
      this.backoffMs = 500;
      ws.send(encodeMessage({ id: this.ids.allocate(), type: "hello",
                              protocol_version: PROTOCOL_VERSION }));
    };
    ws.onmessage = (ev: MessageEvent) => {
      if (typeof ev.data === "string") {
        this.handleText(ev.data);
      } else {
        this.handleBinary(ev.data as ArrayBuffer);
      }
    };
    ws.onclose = () => {
      this.ws = null;
      if (!this.closedByUser) {
        this.status = "connecting";
        this.scheduleReconnect();
      }
      this.notify();
    };
    ws.onerror = () => {
      this.lastError = "socket error";
      this.notify();
    };
  }

  private scheduleReconnect(): void {
    if (this.reconnectTimer !== null) clearTimeout(this.reconnectTimer);
    this.reconnectTimer = setTimeout(() => this.open(), this.backoffMs);
    this.backoffMs = Math.min(this.backoffMs * 2, 10_000);
  }

  private handleText(text: string): void {
    let msg: ServerMessage;
    try {
      msg = parseServerMessage(text);
    } catch (e) {
      this.lastError = String(e);
      this.notify();
      return;
    }
    switch (msg.type) {
      case "ready":
        if (msg.protocol_version !== PROTOCOL_VERSION) {
          this.lastError = `server speaks protocol v${msg.protocol_version}, ` +
            `client v${PROTOCOL_VERSION}`;
          this.status = "error";
          this.closedByUser = true; // mismatched peers never auto-retry
          this.ws?.close();
        } else {
          this.status = "ready";
          this.config = msg.config;
          this.send({ type: "mesh_request" });
        }
        break;
      case "stats":
        this.stats = msg;
        break;
      case "snapshot_saved":
        this.snapshots.push({ snapshotId: msg.snapshot_id });
        break;
      case "error":
        this.lastError = `[${msg.code}] ${msg.message}`;
        break;
      case "ack":
        break;
    }
    this.notify();
  }

  private handleBinary(buf: ArrayBuffer): void {
    try {
      const frame = decodeMeshFrame(buf);
      // stale frames (reordered by queueing) never replace newer geometry
      if (this.latestFrame === null || frame.frame >= this.latestFrame.frame) {
        this.latestFrame = frame;
        this.meshDirty = true;
      }
    } catch (e) {
      this.lastError = String(e);
    }
    this.notify();
  }

  /** Queue a message; it leaves on the next flush(). */
  send(body: OutboundMessage): void {
    this.queue.push({ id: this.ids.allocate(), ...body } as ClientMessage);
  }

  /** Flush queued messages; call at most once per animation tick. */
  flush(): void {
    if (!this.ws || this.ws.readyState !== WebSocket.OPEN || this.status !== "ready") return;
    for (const msg of this.queue) this.ws.send(encodeMessage(msg));
    this.queue.length = 0;
  }

  get queueLength(): number {
    return this.queue.length;
  }

  // convenience senders -----------------------------------------------------

  sendPose(time: number, joints: Record<string, JointPose>): void {
    this.send({ type: "pose_update", time, joints });
  }

  sendGesture(event: GestureEvent): void {
    this.send({ type: "gesture", event });
  }

  sendEdit(op: EditOp): void {
    this.send({ type: "edit", op });
  }

  sendMaterial(object: number, params: Record<string, number>): void {
    this.send({ type: "material_update", object, params });
  }

  requestSnapshot(): void {
    this.send({ type: "snapshot_request" });
  }

  /** Undo: restore the most recent snapshot. */
  undo(): void {
    const last = this.snapshots[this.snapshots.length - 1];
    if (last) this.send({ type: "restore_request", snapshot_id: last.snapshotId });
  }
}
