// Side panel: connection, tools, material sliders, snapshots, stats.

import { ClientSessionState } from "./session.js";
import { Controls } from "./controls.js";

const TOOLS = ["sphere", "rod", "plate", "cone"];

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, attrs: Record<string, string> = {}, text = ""
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text) node.textContent = text;
  return node;
}

function slider(label: string, min: number, max: number, step: number, value: number,
                onInput: (v: number) => void): HTMLElement {
  const wrap = el("label", { class: "row" });
  const name = el("span", {}, label);
  const input = el("input", {
    type: "range", min: String(min), max: String(max), step: String(step),
    value: String(value),
  });
  const readout = el("span", { class: "value" }, String(value));
  input.addEventListener("input", () => {
    readout.textContent = input.value;
    onInput(Number(input.value));
  });
  wrap.append(name, input, readout);
  return wrap;
}

export function buildPanel(root: HTMLElement, session: ClientSessionState,
                           controls: Controls): { setStatus: (s: string) => void } {
  const status = el("div", { class: "status" }, "disconnected");
  const statsBox = el("div", { class: "stats" });
  const errBox = el("div", { class: "error" });

  const connectRow = el("div", { class: "row" });
  const urlInput = el("input", { type: "text", value: defaultUrl() });
  const connectBtn = el("button", {}, "connect");
  connectBtn.addEventListener("click", () => session.connect(urlInput.value));
  connectRow.append(urlInput, connectBtn);

  const toolRow = el("div", { class: "row tools" });
  for (const tool of TOOLS) {
    const b = el("button", {}, tool);
    b.addEventListener("click", () => controls.selectTool(tool));
    toolRow.append(b);
  }

  const material = el("div", { class: "group" });
  material.append(el("h3", {}, "material (object 0)"));
  const pending: Record<string, number> = {};
  let timer: ReturnType<typeof setTimeout> | null = null;
  const push = (key: string, v: number) => {
    pending[key] = v;
    if (timer !== null) clearTimeout(timer);
    timer = setTimeout(() => {
      session.sendMaterial(0, { ...pending });
      for (const k of Object.keys(pending)) delete pending[k];
    }, 150);
  };
  material.append(
    slider("stiffness mu", 100, 20000, 100, 1923, (v) => push("mu", v)),
    slider("incompressibility", 100, 40000, 100, 2885, (v) => push("lam", v)),
    slider("yield tau_y", 0, 2000, 10, 150, (v) => push("tau_y", v)),
  );

  const gesture = el("div", { class: "group" });
  gesture.append(el("h3", {}, "gesture"));
  gesture.append(
    slider("select radius", 0.02, 0.4, 0.01, controls.config.selectRadius,
           (v) => { controls.config.selectRadius = v; }),
    slider("force ratio", 1, 200, 1, controls.config.forceRatio,
           (v) => { controls.config.forceRatio = v; }),
  );

  const snapRow = el("div", { class: "row" });
  const saveBtn = el("button", {}, "snapshot");
  const undoBtn = el("button", {}, "undo");
  saveBtn.addEventListener("click", () => session.requestSnapshot());
  undoBtn.addEventListener("click", () => session.undo());
  snapRow.append(saveBtn, undoBtn);

  const help = el("div", { class: "help" },
    "move: tool follows pointer · wheel: tool depth · shift+wheel: zoom · " +
    "drag: orbit · ctrl+drag: select & stretch");

  root.append(status, connectRow, toolRow, material, gesture, snapRow, statsBox,
              errBox, help);

  session.onChange(() => {
    status.textContent = session.status;
    status.className = `status ${session.status}`;
    if (session.stats) {
      const s = session.stats;
      statsBox.textContent =
        `frame ${s.frame} · ${s.steps_per_s.toFixed(0)} steps/s · ` +
        `${s.particles} particles (${s.active_particles} active) · ` +
        `${session.snapshots.length} snapshots`;
    }
    errBox.textContent = session.lastError ?? "";
  });

  return { setStatus: (s: string) => { status.textContent = s; } };
}

function defaultUrl(): string {
  const host = location.hostname || "127.0.0.1";
  return `ws://${host}:8765/session`;
}
