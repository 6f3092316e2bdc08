import { ClientSessionState } from "./session.js";
import { Viewer } from "./viewer.js";
import { Controls } from "./controls.js";
import { buildPanel } from "./panel.js";

const canvas = document.getElementById("view") as HTMLCanvasElement;
const panelRoot = document.getElementById("panel") as HTMLElement;

const session = new ClientSessionState();
const viewer = new Viewer(canvas);
const controls = new Controls(canvas, viewer, session, {
  selectRadius: 0.15,
  forceRatio: 30,
  toolRadius: 0.06,
});
buildPanel(panelRoot, session, controls);

function fit(): void {
  const rect = canvas.parentElement!.getBoundingClientRect();
  viewer.resize(rect.width, rect.height);
}
window.addEventListener("resize", fit);
fit();

let last = performance.now();
function tick(now: number): void {
  const dt = Math.min((now - last) / 1000, 0.1);
  last = now;
  if (session.status === "ready") {
    controls.tick(dt);
    session.flush(); // input queue drains at most once per tick
  }
  if (session.meshDirty && session.latestFrame) {
    viewer.applyFrame(session.latestFrame);
    session.meshDirty = false;
  }
  viewer.render();
  requestAnimationFrame(tick);
}
requestAnimationFrame(tick);

session.connect(`ws://${location.hostname || "127.0.0.1"}:8765/session`);
