// Wire protocol for the teleoperation service: versioned JSON text frames.
// The server is authoritative; the client renders records and sends inputs.

export const PROTOCOL_VERSION = 1;

export const CLASS_NAMES = ["Other", "Positioning", "Push", "Pull", "Hand-off"];

export interface StateRecord {
  tick: number;
  t: number;
  mode: string;
  raw_label: string | null;
  true_class: number | null;
  emitted_class: number | null;
  probs: number[] | null;
  lam: number;
  lam_axes: number[];
  kd: boolean;
  ch: boolean;
  hand_pos_task: number[];
  tau_h_hat_task: number[];
  tau_cmd_task: number[];
  psm1_pos_task: number[];
  psm1_perp_deg: number;
  psm2_pos_task: number[];
  entry_index: number;
  pedal: boolean;
  clutch: boolean;
  auto_orient: boolean;
  rejected: boolean;
}

export interface HelloFrame {
  v: number;
  type: "hello";
  sid: number;
  mode: string;
  dt: number;
  seed: number;
}

export interface StateFrame {
  v: number;
  type: "state";
  tick: number;
  record: StateRecord;
  entries_task: number[][];
  entry_y: number;
  fixed_height: number;
  mode: string;
}

export interface AckFrame {
  type: "ack";
  tick: number;
}

export interface ErrorFrame {
  type: "error";
  error: string;
}

export type ServerFrame = HelloFrame | StateFrame | AckFrame | ErrorFrame;

export function parseServerFrame(text: string): ServerFrame | null {
  let data: unknown;
  try {
    data = JSON.parse(text);
  } catch {
    return null;
  }
  if (typeof data !== "object" || data === null) return null;
  const obj = data as Record<string, unknown>;
  switch (obj.type) {
    case "hello":
    case "state":
      if (obj.v !== PROTOCOL_VERSION) return null;
      return obj as unknown as ServerFrame;
    case "ack":
      return typeof obj.tick === "number" ? (obj as unknown as AckFrame) : null;
    case "error":
      return typeof obj.error === "string" ? (obj as unknown as ErrorFrame) : null;
    default:
      return null;
  }
}

export interface InputState {
  pos_task: [number, number, number];
  gripper: number;
  pedal: boolean;
  clutch: boolean;
  mode: string | null;
  occlude: boolean;
  lambda_cap: number | null;
}

export function defaultInput(): InputState {
  return {
    pos_task: [0.0, 0.003, 0.01],
    gripper: 0.2,
    pedal: false,
    clutch: false,
    mode: null,
    occlude: false,
    lambda_cap: null,
  };
}

export function inputFrame(state: InputState): string {
  return JSON.stringify({ v: PROTOCOL_VERSION, type: "input", ...state });
}

export function surgemeName(code: number | null): string {
  if (code === null || code < 0 || code >= CLASS_NAMES.length) return "—";
  return CLASS_NAMES[code];
}
