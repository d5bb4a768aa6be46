// Wiring: connection, input capture, rendering, HUD.

import { drawLambdaChart, drawProbChart } from "./charts.js";
import { Connection } from "./connection.js";
import {
  DEFAULT_VIEWPORT,
  applyKey,
  applyLambdaCap,
  applyPointer,
  applyWheel,
  freshInput,
} from "./input.js";
import { InputState, inputFrame } from "./protocol.js";
import { drawScene } from "./scene.js";
import {
  ViewState,
  applyFrame,
  initialView,
  noteConnection,
  noteInputSent,
} from "./viewmodel.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const sceneCanvas = el<HTMLCanvasElement>("scene");
const lamCanvas = el<HTMLCanvasElement>("lambda-chart");
const probCanvas = el<HTMLCanvasElement>("prob-chart");
const statusDot = el<HTMLSpanElement>("status");
const modeBadge = el<HTMLSpanElement>("mode");
const surgemeBadge = el<HTMLSpanElement>("surgeme");
const lamValue = el<HTMLSpanElement>("lam-value");
const perpValue = el<HTMLSpanElement>("perp-value");
const latencyValue = el<HTMLSpanElement>("latency");
const capSlider = el<HTMLInputElement>("cap-slider");
const capValue = el<HTMLSpanElement>("cap-value");
const capEnable = el<HTMLInputElement>("cap-enable");

let view: ViewState = initialView();
let input: InputState = freshInput();

const vp = { ...DEFAULT_VIEWPORT, width: sceneCanvas.width, height: sceneCanvas.height };

const wsHost = location.hostname || "127.0.0.1";
const wsPort = location.protocol.startsWith("http") && location.port
  ? location.port : "8700";
const wsUrl = `ws://${wsHost}:${wsPort}/session`;
const conn = new Connection(wsUrl, {
  onFrame: (frame) => {
    view = applyFrame(view, frame);
    if (frame.type === "state") render();
  },
  onStatus: (connected) => {
    view = noteConnection(view, connected);
    statusDot.className = connected ? "dot ok" : "dot bad";
    if (connected) sendInput();   // resume with current input state
  },
});

function sendInput(): void {
  if (conn.send(inputFrame(input))) {
    view = noteInputSent(view);
  }
}

sceneCanvas.addEventListener("pointermove", (ev) => {
  const rect = sceneCanvas.getBoundingClientRect();
  input = applyPointer(input, ev.clientX - rect.left, ev.clientY - rect.top, vp);
  sendInput();
});

sceneCanvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  input = applyWheel(input, ev.deltaY);
  sendInput();
}, { passive: false });

window.addEventListener("keydown", (ev) => {
  const result = applyKey(input, ev.key, true, view.mode);
  if (result.send) {
    input = result.state;
    sendInput();
  }
});

window.addEventListener("keyup", (ev) => {
  const result = applyKey(input, ev.key, false, view.mode);
  if (result.send) {
    input = result.state;
    sendInput();
  }
});

function syncCap(): void {
  const cap = capEnable.checked ? Number(capSlider.value) / 100 : null;
  capValue.textContent = cap === null ? "off" : cap.toFixed(2);
  input = applyLambdaCap(input, cap);
  sendInput();
}
capSlider.addEventListener("input", syncCap);
capEnable.addEventListener("change", syncCap);

function render(): void {
  const ctx = sceneCanvas.getContext("2d")!;
  drawScene(ctx, vp, view.record, view.entries, view.entryY);
  drawLambdaChart(lamCanvas.getContext("2d")!, lamCanvas.width, lamCanvas.height,
                  view.lamHistory);
  drawProbChart(probCanvas.getContext("2d")!, probCanvas.width, probCanvas.height,
                view.probHistory);
  modeBadge.textContent = view.mode;
  modeBadge.className = view.mode === "CIAC" ? "badge ciac" : "badge trad";
  surgemeBadge.textContent = view.surgeme;
  if (view.record) {
    lamValue.textContent = view.record.lam.toFixed(3);
    perpValue.textContent = `${view.record.psm1_perp_deg.toFixed(1)}°`;
  }
  latencyValue.textContent =
    view.inputToRenderTicks === null ? "—" : `${view.inputToRenderTicks} ticks`;
}
