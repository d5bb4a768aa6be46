// Render-side state: a pure reducer over server frames. The client never
// simulates; everything shown comes from the latest authoritative record.

import { ServerFrame, StateFrame, StateRecord, surgemeName } from "./protocol.js";

export const HISTORY_LIMIT = 300;

export interface ViewState {
  connected: boolean;
  sid: number | null;
  mode: string;
  lastTick: number;
  record: StateRecord | null;
  entries: number[][];
  entryY: number;
  fixedHeight: number;
  lamHistory: number[];
  probHistory: (number[] | null)[];
  surgeme: string;
  lastError: string | null;
  // input-to-render latency bookkeeping, in server ticks
  inputSentAtTick: number | null;
  inputToRenderTicks: number | null;
}

export function initialView(): ViewState {
  return {
    connected: false,
    sid: null,
    mode: "—",
    lastTick: -1,
    record: null,
    entries: [],
    entryY: 0.003,
    fixedHeight: 0.01,
    lamHistory: [],
    probHistory: [],
    surgeme: "—",
    lastError: null,
    inputSentAtTick: null,
    inputToRenderTicks: null,
  };
}

export function noteConnection(v: ViewState, connected: boolean): ViewState {
  return { ...v, connected };
}

export function noteInputSent(v: ViewState): ViewState {
  return { ...v, inputSentAtTick: v.lastTick };
}

function pushCapped<T>(arr: T[], value: T, limit: number): T[] {
  const out = arr.length >= limit ? arr.slice(arr.length - limit + 1) : arr.slice();
  out.push(value);
  return out;
}

export function applyFrame(v: ViewState, frame: ServerFrame): ViewState {
  switch (frame.type) {
    case "hello":
      return { ...v, connected: true, sid: frame.sid, mode: frame.mode };
    case "error":
      return { ...v, lastError: frame.error };
    case "ack":
      return v;
    case "state":
      return applyState(v, frame);
  }
}

function applyState(v: ViewState, frame: StateFrame): ViewState {
  const rec = frame.record;
  // badge, charts and ghost all update in the same apply: the render lag is
  // however many server ticks elapsed since the input was sent
  const latency =
    v.inputSentAtTick === null ? v.inputToRenderTicks : rec.tick - v.inputSentAtTick;
  return {
    ...v,
    mode: frame.mode,
    lastTick: rec.tick,
    record: rec,
    entries: frame.entries_task,
    entryY: frame.entry_y,
    fixedHeight: frame.fixed_height,
    lamHistory: pushCapped(v.lamHistory, rec.lam, HISTORY_LIMIT),
    probHistory: pushCapped(v.probHistory, rec.probs, HISTORY_LIMIT),
    surgeme: surgemeName(rec.emitted_class),
    inputSentAtTick: null,
    inputToRenderTicks: latency,
  };
}
