// Browser wiring: canvas rendering, keyboard/cursor input, audio cues, and
// the settings panel. All state is server-authoritative (see state.ts).

import { CuePlayer, webAudioPlayer } from "./audio.js";
import { Camera, FIRST_PERSON_PRESET, ORBIT_PRESET } from "./camera.js";
import { GESTURE_PERIOD_MS, GestureScheduler, gazeFromCursor } from "./input.js";
import { SessionClient } from "./net.js";
import type { ServerMsg } from "./protocol.js";
import { COLORS, buildScene } from "./scene.js";
import { applyServerMessage, drainCues, initialViewState, markConnection } from "./state.js";

const params = new URLSearchParams(location.search);
const serverUrl = params.get("server") ?? "ws://127.0.0.1:8765";

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const statusEl = document.getElementById("status")!;

const view = initialViewState();
const camera: Camera = { ...ORBIT_PRESET };
const scheduler = new GestureScheduler();
const cues = new CuePlayer(webAudioPlayer());
let cursor: { x: number; y: number } | null = null;
let dragging = false;

const client = new SessionClient({
  url: serverUrl,
  socketFactory: (url) => new WebSocket(url) as unknown as import("./net.js").SocketLike,
  onMessage: (msg: ServerMsg) => {
    applyServerMessage(view, msg, performance.now());
    if (msg.kind === "snapshot") {
      sendGaze();
    }
    if (msg.kind === "reject") {
      statusEl.textContent = `rejected: ${msg.reason}`;
    }
  },
  onState: (state) => {
    markConnection(view, state);
    statusEl.textContent = state;
  },
});
client.connect();

function sendGaze(): void {
  if (!cursor || !view.scene) return;
  const ray = gazeFromCursor(camera, view.scene, cursor.x, cursor.y, canvas.width, canvas.height);
  client.send({ kind: "gaze", origin: ray.origin, direction: ray.direction });
}

// keyboard -> gestures at the classifier cadence
window.addEventListener("keydown", (ev) => {
  if (ev.repeat) return;
  scheduler.keyDown(ev.code);
});
window.addEventListener("keyup", (ev) => scheduler.keyUp(ev.code));
setInterval(() => {
  for (const gesture of scheduler.due(performance.now())) {
    client.send({ kind: "gesture", gesture });
  }
}, GESTURE_PERIOD_MS / 2);

// cursor -> gaze; drag orbits the camera
canvas.addEventListener("mousemove", (ev) => {
  const rect = canvas.getBoundingClientRect();
  const x = ev.clientX - rect.left;
  const y = ev.clientY - rect.top;
  if (dragging && cursor) {
    camera.yaw -= (x - cursor.x) * 0.01;
    camera.pitch = Math.min(1.4, Math.max(0.05, camera.pitch + (y - cursor.y) * 0.01));
  }
  cursor = { x, y };
});
canvas.addEventListener("mousedown", () => { dragging = true; });
window.addEventListener("mouseup", () => { dragging = false; });
canvas.addEventListener("wheel", (ev) => {
  camera.distance = Math.min(3.0, Math.max(0.4, camera.distance + ev.deltaY * 0.001));
  ev.preventDefault();
});

// settings panel buttons
document.getElementById("start")?.addEventListener("click", () => client.send({ kind: "trial", action: "start" }));
document.getElementById("stop")?.addEventListener("click", () => client.send({ kind: "trial", action: "stop" }));
document.getElementById("reset")?.addEventListener("click", () => client.send({ kind: "trial", action: "reset" }));
document.getElementById("mute")?.addEventListener("click", (ev) => {
  cues.muted = !cues.muted;
  (ev.target as HTMLElement).textContent = cues.muted ? "unmute" : "mute";
});
for (const method of ["A", "B", "C", "D"] as const) {
  document.getElementById(`method-${method}`)?.addEventListener("click", () => {
    client.send({ kind: "method", method });
  });
}
document.getElementById("camera-fp")?.addEventListener("click", () => Object.assign(camera, FIRST_PERSON_PRESET));
document.getElementById("camera-orbit")?.addEventListener("click", () => Object.assign(camera, ORBIT_PRESET));

function draw(): void {
  const now = performance.now();
  cues.playCues(drainCues(view), now);
  const { ops } = buildScene(view, camera, canvas.width, canvas.height, now, cues.flashUntilMs);
  ctx.fillStyle = COLORS.background;
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  for (const op of ops) {
    switch (op.op) {
      case "poly": {
        ctx.beginPath();
        op.points.forEach(([x, y], i) => (i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y)));
        if (op.close) ctx.closePath();
        if (op.fill) { ctx.fillStyle = op.fill; ctx.fill(); }
        if (op.stroke) { ctx.strokeStyle = op.stroke; ctx.lineWidth = op.width ?? 1; ctx.stroke(); }
        break;
      }
      case "circle": {
        ctx.beginPath();
        ctx.setLineDash(op.dash ? [4, 3] : []);
        ctx.arc(op.x, op.y, op.r, 0, Math.PI * 2);
        if (op.fill) { ctx.fillStyle = op.fill; ctx.fill(); }
        if (op.stroke) { ctx.strokeStyle = op.stroke; ctx.lineWidth = op.width ?? 1; ctx.stroke(); }
        ctx.setLineDash([]);
        break;
      }
      case "text": {
        ctx.fillStyle = op.color;
        ctx.font = `${op.size}px system-ui, sans-serif`;
        ctx.fillText(op.text, op.x, op.y);
        break;
      }
      case "overlay": {
        ctx.globalAlpha = op.alpha;
        ctx.fillStyle = op.color;
        ctx.fillRect(0, 0, canvas.width, canvas.height);
        ctx.globalAlpha = 1.0;
        break;
      }
    }
  }
  requestAnimationFrame(draw);
}
requestAnimationFrame(draw);
