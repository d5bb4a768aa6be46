// Pointer and keyboard mapping: canvas pixels to task-frame coordinates,
// keys to pedal/clutch/occlusion/mode. Pure functions so they are testable.

import { InputState, defaultInput } from "./protocol.js";

// top-down view window over the task frame, meters
export interface Viewport {
  xMin: number;
  xMax: number;
  yMin: number;
  yMax: number;
  width: number;   // canvas pixels
  height: number;
}

export const DEFAULT_VIEWPORT: Viewport = {
  xMin: -0.02,
  xMax: 0.09,
  yMin: -0.07,
  yMax: 0.05,
  width: 720,
  height: 540,
};

export const Z_MIN = 0.0;
export const Z_MAX = 0.04;

export function pointerToTask(px: number, py: number, vp: Viewport): [number, number] {
  const x = vp.xMin + (px / vp.width) * (vp.xMax - vp.xMin);
  // screen y grows downward; task y grows upward
  const y = vp.yMax - (py / vp.height) * (vp.yMax - vp.yMin);
  return [x, y];
}

export function taskToScreen(x: number, y: number, vp: Viewport): [number, number] {
  const px = ((x - vp.xMin) / (vp.xMax - vp.xMin)) * vp.width;
  const py = ((vp.yMax - y) / (vp.yMax - vp.yMin)) * vp.height;
  return [px, py];
}

export function clampZ(z: number): number {
  return Math.min(Z_MAX, Math.max(Z_MIN, z));
}

export interface KeyResult {
  state: InputState;
  send: boolean;
}

// space = pedal (momentary), shift = clutch (momentary),
// o = force an occlusion episode (toggle), m = mode toggle
export function applyKey(state: InputState, key: string, down: boolean,
                         currentMode: string): KeyResult {
  const next = { ...state };
  switch (key) {
    case " ":
      if (next.pedal === down) return { state, send: false };
      next.pedal = down;
      return { state: next, send: true };
    case "Shift":
      if (next.clutch === down) return { state, send: false };
      next.clutch = down;
      return { state: next, send: true };
    case "o":
    case "O":
      if (!down) return { state, send: false };
      next.occlude = !next.occlude;
      return { state: next, send: true };
    case "m":
    case "M":
      if (!down) return { state, send: false };
      next.mode = currentMode === "CIAC" ? "TRADITIONAL" : "CIAC";
      return { state: next, send: true };
    default:
      return { state, send: false };
  }
}

export function applyPointer(state: InputState, px: number, py: number,
                             vp: Viewport): InputState {
  const [x, y] = pointerToTask(px, py, vp);
  return { ...state, pos_task: [x, y, state.pos_task[2]] };
}

export function applyWheel(state: InputState, deltaY: number): InputState {
  // wheel up lifts the tool; 1 notch = 1 mm
  const z = clampZ(state.pos_task[2] - Math.sign(deltaY) * 0.001);
  return { ...state, pos_task: [state.pos_task[0], state.pos_task[1], z] };
}

export function applyLambdaCap(state: InputState, cap: number | null): InputState {
  return { ...state, lambda_cap: cap };
}

export function freshInput(): InputState {
  return defaultInput();
}
