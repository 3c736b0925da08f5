import { AudioPreview } from "./audio.js";
import { ServiceConnection } from "./connection.js";
import type { PoseReport } from "./protocol.js";
import { drawSpectrum, peakMarkers, tracePath } from "./spectrum.js";
import { SceneStore } from "./store.js";
import type { Marker } from "./volume.js";
import {
  hitTest,
  markerRadius,
  screenToWorld,
  wasClamped,
  worldToScreen,
} from "./volume.js";

const store = new SceneStore();
const audio = new AudioPreview();

const wsUrl =
  new URLSearchParams(location.search).get("server") ??
  `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws`;

const connection = new ServiceConnection(
  wsUrl,
  (m) => {
    store.apply(m);
    if (m.type === "frame") audio.handle(m.events);
  },
  (state) => store.setConnection(state),
);
connection.connect();

// --- DOM handles -----------------------------------------------------------

const $ = (id: string) => document.getElementById(id)!;
const spectrumCanvas = $("spectrum") as HTMLCanvasElement;
const volumeCanvas = $("volume") as HTMLCanvasElement;
const cardsDiv = $("cards");
const consoleDiv = $("console");
const statusSpan = $("status");
const modeSpan = $("mode");
const heightSlider = $("height") as HTMLInputElement;
const pullSlider = $("pull") as HTMLInputElement;
const pullLabel = $("pull-label");
const audioButton = $("audio") as HTMLButtonElement;
const sumSpan = $("triad-sum");

audioButton.onclick = () => {
  audioButton.textContent = audio.toggle() ? "audio: on" : "audio: off";
};

const VIEW = { width: 420, height: 420, margin: 18 };
let markers: Marker[] = [];
let dragging: string | null = null;
let lastEventRow = -1;

function bounds() {
  return store.scene?.volume ?? { x: [-0.25, 0.25], y: [-0.25, 0.25], z: [0.03, 0.6] };
}

// --- volume view interaction ------------------------------------------------

volumeCanvas.addEventListener("pointerdown", (ev) => {
  const rect = volumeCanvas.getBoundingClientRect();
  const name = hitTest(markers, ev.clientX - rect.left, ev.clientY - rect.top);
  store.select(name);
  if (name) {
    dragging = name;
    const view = store.objects.get(name);
    if (view) {
      heightSlider.value = String(view.pose.position[2]);
      pullSlider.value = String(view.pose.pull);
    }
    volumeCanvas.setPointerCapture(ev.pointerId);
  }
});

function sendPose(name: string, pos: [number, number, number]) {
  const view = store.objects.get(name);
  if (!view) return;
  const b = bounds();
  const clamped = wasClamped(pos, b);
  volumeCanvas.classList.toggle("clamped", clamped);
  const pose: PoseReport = {
    position: pos,
    quaternion: view.pose.quaternion,
    pull: view.pose.pull,
  };
  store.previewPose(name, pose);
  connection
    .send({ op: "set_pose", object: name, position: [...pos] })
    .then((outcome) => {
      if (outcome.ok && outcome.frameIndex !== undefined) {
        store.confirmEdit(name, outcome.frameIndex);
      } else {
        store.revertEdit(name, outcome.reason ?? "rejected");
      }
    });
}

volumeCanvas.addEventListener("pointermove", (ev) => {
  if (!dragging) return;
  const rect = volumeCanvas.getBoundingClientRect();
  const view = store.objects.get(dragging);
  if (!view) return;
  const world = screenToWorld(
    ev.clientX - rect.left, ev.clientY - rect.top,
    view.pose.position[2], bounds(), VIEW);
  sendPose(dragging, world);
});

volumeCanvas.addEventListener("pointerup", () => {
  dragging = null;
  volumeCanvas.classList.remove("clamped");
});

heightSlider.addEventListener("input", () => {
  const name = store.selected;
  if (!name) return;
  const view = store.objects.get(name);
  if (!view) return;
  const [x, y] = view.pose.position;
  sendPose(name, [x, y, Number(heightSlider.value)]);
});

pullSlider.addEventListener("input", () => {
  const name = store.selected;
  if (!name) return;
  pullLabel.textContent = Number(pullSlider.value).toFixed(2);
  connection.send({ op: "set_param", object: name, value: Number(pullSlider.value) })
    .then((outcome) => {
      if (!outcome.ok) store.revertEdit(name, outcome.reason ?? "rejected");
    });
});

// --- rendering ---------------------------------------------------------------

const ROLE_COLORS: Record<string, string> = {
  goblin: "#7c5", ring: "#fd5", pengachu: "#5cf", cube: "#d7f",
  pez: "#f95", porcupine: "#f66", pig: "#f9c", eyeball: "#9ef", triangle: "#ff8",
};

function renderVolume() {
  const ctx = volumeCanvas.getContext("2d")!;
  const b = bounds();
  ctx.clearRect(0, 0, VIEW.width, VIEW.height);
  // coil footprint
  ctx.strokeStyle = "#456";
  ctx.setLineDash([4, 4]);
  const center = worldToScreen([0, 0, 0], b, VIEW);
  const edge = worldToScreen([0.15, 0, 0], b, VIEW);
  ctx.beginPath();
  ctx.arc(center.sx, center.sy, edge.sx - center.sx, 0, Math.PI * 2);
  ctx.stroke();
  ctx.setLineDash([]);
  markers = [];
  for (const view of store.objects.values()) {
    const { sx, sy } = worldToScreen(view.pose.position, b, VIEW);
    const r = markerRadius(view.pose.position[2], b);
    markers.push({ name: view.name, sx, sy, radius: r + 4 });
    ctx.beginPath();
    ctx.fillStyle = ROLE_COLORS[view.role] ?? "#aaa";
    ctx.globalAlpha = view.present ? 1.0 : 0.35;
    ctx.arc(sx, sy, r, 0, Math.PI * 2);
    ctx.fill();
    ctx.globalAlpha = 1.0;
    if (view.name === store.selected) {
      ctx.strokeStyle = "#fff";
      ctx.lineWidth = 2;
      ctx.stroke();
    }
    ctx.fillStyle = "#ddd";
    ctx.font = "10px monospace";
    ctx.fillText(view.name, sx + r + 2, sy + 3);
  }
}

function renderSpectrum() {
  if (!store.scene || !store.spectrum || !store.lastFrame) return;
  const ctx = spectrumCanvas.getContext("2d")!;
  const { f_start, f_end } = store.scene.sweep;
  const trace = tracePath(
    store.spectrum.freq_hz, store.spectrum.magnitude,
    f_start, f_end, spectrumCanvas.width, spectrumCanvas.height);
  const tags = store.scene.objects.flatMap((o) => o.tags);
  const marks = peakMarkers(
    store.lastFrame.peaks, tags, f_start, f_end, spectrumCanvas.width);
  drawSpectrum(ctx, trace, marks, spectrumCanvas.width, spectrumCanvas.height);
}

function renderCards() {
  const rows: string[] = [];
  for (const view of store.objects.values()) {
    const sel = view.name === store.selected ? " selected" : "";
    const present = view.present ? "present" : "absent";
    const extra = view.cosines
      ? ` cos=[${view.cosines.map((c) => c.toFixed(2)).join(", ")}]`
      : view.pull > 0 ? ` pull=${view.pull.toFixed(2)}` : "";
    rows.push(
      `<div class="card ${present}${sel}" data-name="${view.name}">` +
      `<b>${view.name}</b> <span class="role">${view.role}</span><br>` +
      `prox ${view.proximity.toFixed(2)} amp ${view.amplitude.toFixed(3)}${extra}` +
      `</div>`);
  }
  cardsDiv.innerHTML = rows.join("");
  for (const el of cardsDiv.querySelectorAll<HTMLElement>(".card")) {
    el.onclick = () => store.select(el.dataset.name ?? null);
  }
}

function renderConsole() {
  const log = store.eventLog;
  if (log.length === 0) {
    lastEventRow = -1;
    consoleDiv.textContent = "";
    return;
  }
  const fresh = log.filter((e) => e.frame_index > lastEventRow);
  if (fresh.length === 0) return;
  lastEventRow = log[log.length - 1].frame_index;
  const lines = fresh.map(
    (e) =>
      `<div>${String(e.t_ms).padStart(6)} ms  f${e.frame_index}  ${e.kind}` +
      ` ch${e.ch} ${e.d1} ${e.d2}</div>`);
  consoleDiv.insertAdjacentHTML("beforeend", lines.join(""));
  while (consoleDiv.childElementCount > 300) consoleDiv.firstElementChild!.remove();
  consoleDiv.scrollTop = consoleDiv.scrollHeight;
}

function renderStatus() {
  statusSpan.textContent = store.connection;
  statusSpan.className = store.connection;
  modeSpan.textContent = store.mode ? "mode B" : "mode A";
  modeSpan.className = store.mode ? "mode-b" : "mode-a";
  const name = store.selected;
  const sum = name ? store.triadSum(name) : null;
  sumSpan.textContent = sum === null ? "-" : sum.toFixed(4);
  const view = name ? store.objects.get(name) : null;
  pullSlider.disabled = !view;
  heightSlider.disabled = !view;
}

let dirty = true;
store.onChange(() => (dirty = true));
function frame() {
  if (dirty) {
    dirty = false;
    renderVolume();
    renderSpectrum();
    renderCards();
    renderConsole();
    renderStatus();
  }
  requestAnimationFrame(frame);
}
requestAnimationFrame(frame);
