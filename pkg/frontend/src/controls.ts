// Pointer-to-tool mapping: the mouse stands in for hand tracking.
// The tool pose follows the pointer on a camera-facing plane whose
// distance is adjusted with the scroll wheel; left-drag orbits the
// camera; Ctrl+drag is the pinch analog (region select + stretch drag).

import * as THREE from "three";
import { ClientSessionState } from "./session.js";
import { Viewer } from "./viewer.js";

export interface ControlsConfig {
  selectRadius: number;
  forceRatio: number;
  toolRadius: number;
}

export class Controls {
  toolDepth = 1.9;
  toolPos = new THREE.Vector3(0.5, 0.7, 0.5);
  pinching = false;
  pinchCenter: THREE.Vector3 | null = null;
  private orbiting = false;
  private lastPointer = { x: 0, y: 0 };
  private simTime = 0;

  constructor(
    private canvas: HTMLCanvasElement,
    private viewer: Viewer,
    private session: ClientSessionState,
    public config: ControlsConfig,
  ) {
    canvas.addEventListener("pointerdown", (e) => this.onDown(e));
    canvas.addEventListener("pointermove", (e) => this.onMove(e));
    canvas.addEventListener("pointerup", (e) => this.onUp(e));
    canvas.addEventListener("pointerleave", (e) => this.onUp(e));
    canvas.addEventListener("wheel", (e) => this.onWheel(e), { passive: false });
    canvas.addEventListener("contextmenu", (e) => e.preventDefault());
  }

  selectTool(tool: string): void {
    this.session.sendGesture({ type: "tool_select", hand: "tool", tool });
  }

  private ndc(e: PointerEvent): { x: number; y: number } {
    const rect = this.canvas.getBoundingClientRect();
    return {
      x: ((e.clientX - rect.left) / rect.width) * 2 - 1,
      y: -(((e.clientY - rect.top) / rect.height) * 2 - 1),
    };
  }

  private onDown(e: PointerEvent): void {
    this.canvas.setPointerCapture(e.pointerId);
    if (e.ctrlKey || e.metaKey) {
      // pinch analog: select the region under the tool and start dragging
      this.pinching = true;
      this.pinchCenter = this.toolPos.clone();
      this.session.sendGesture({
        type: "pinch_start",
        hand: "mouse",
        position: [this.toolPos.x, this.toolPos.y, this.toolPos.z],
        radius: this.config.selectRadius,
        force_ratio: this.config.forceRatio,
      });
    } else if (e.button === 0) {
      this.orbiting = true;
      this.lastPointer = { x: e.clientX, y: e.clientY };
    }
  }

  private onMove(e: PointerEvent): void {
    const ndc = this.ndc(e);
    this.toolPos = this.viewer.pointerToWorld(ndc.x, ndc.y, this.toolDepth);
    if (this.orbiting) {
      const dx = e.clientX - this.lastPointer.x;
      const dy = e.clientY - this.lastPointer.y;
      this.lastPointer = { x: e.clientX, y: e.clientY };
      this.viewer.rotate(dx * 0.006, dy * 0.006);
    }
    if (this.pinching) {
      this.session.sendGesture({
        type: "pinch_move",
        hand: "mouse",
        position: [this.toolPos.x, this.toolPos.y, this.toolPos.z],
      });
    }
  }

  private onUp(_e: PointerEvent): void {
    this.orbiting = false;
    if (this.pinching) {
      this.pinching = false;
      this.pinchCenter = null;
      this.session.sendGesture({ type: "pinch_end", hand: "mouse" });
    }
  }

  private onWheel(e: WheelEvent): void {
    e.preventDefault();
    if (e.shiftKey) {
      this.viewer.dolly(e.deltaY > 0 ? 1.08 : 0.925);
    } else {
      this.toolDepth = Math.min(Math.max(this.toolDepth + e.deltaY * 0.0015, 0.2), 6);
    }
  }

  /** Stream the current tool pose; called once per animation tick. */
  tick(frameDt: number): void {
    this.simTime += frameDt;
    this.session.sendPose(this.simTime, {
      "tool/tool": { p: [this.toolPos.x, this.toolPos.y, this.toolPos.z] },
    });
    this.viewer.setToolCursor(this.toolPos, this.config.toolRadius);
    this.viewer.showSelection(this.pinching ? this.pinchCenter : null,
                              this.config.selectRadius);
  }
}
