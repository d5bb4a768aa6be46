import { describe, expect, it } from "vitest";

import { ServerFrame, StateRecord } from "../src/protocol.js";
import {
  HISTORY_LIMIT,
  applyFrame,
  initialView,
  noteInputSent,
} from "../src/viewmodel.js";

function record(tick: number, lam = 0.4, emitted: number | null = 3): StateRecord {
  return {
    tick, t: tick * 0.05, mode: "CIAC", raw_label: null, true_class: null,
    emitted_class: emitted, probs: [0.1, 0.1, 0.1, 0.6, 0.1], lam,
    lam_axes: [lam, 0, 0], kd: true, ch: true,
    hand_pos_task: [0, 0, 0.01], tau_h_hat_task: [0.01, 0, 0.01],
    tau_cmd_task: [0.01, 0, 0.01], psm1_pos_task: [0.005, 0, 0.01],
    psm1_perp_deg: 3.2, psm2_pos_task: [0, -0.04, 0.02], entry_index: 1,
    pedal: false, clutch: false, auto_orient: false, rejected: false,
  };
}

function stateFrame(tick: number, lam = 0.4, emitted: number | null = 3): ServerFrame {
  return {
    v: 1, type: "state", tick, record: record(tick, lam, emitted),
    entries_task: [[0.015, 0.003, 0]], entry_y: 0.003, fixed_height: 0.01,
    mode: "CIAC",
  } as ServerFrame;
}

describe("viewmodel reducer", () => {
  it("badge, chart and ghost update in the same frame application", () => {
    let v = initialView();
    v = applyFrame(v, stateFrame(0, 0.7, 2));
    expect(v.surgeme).toBe("Push");
    expect(v.lamHistory).toEqual([0.7]);
    expect(v.record?.tau_h_hat_task).toEqual([0.01, 0, 0.01]);
    expect(v.lastTick).toBe(0);
  });

  it("input-to-render latency is measured in server ticks and stays small", () => {
    let v = initialView();
    v = applyFrame(v, stateFrame(5));
    v = noteInputSent(v);                 // input sent while at tick 5
    v = applyFrame(v, stateFrame(6));     // next snapshot renders it
    expect(v.inputToRenderTicks).toBe(1);
    expect(v.inputToRenderTicks!).toBeLessThanOrEqual(3);
  });

  it("keeps a bounded rolling history", () => {
    let v = initialView();
    for (let i = 0; i < HISTORY_LIMIT + 50; i++) {
      v = applyFrame(v, stateFrame(i, Math.random()));
    }
    expect(v.lamHistory.length).toBe(HISTORY_LIMIT);
    expect(v.probHistory.length).toBe(HISTORY_LIMIT);
  });

  it("renders only server-authoritative state", () => {
    let v = initialView();
    v = applyFrame(v, stateFrame(3));
    // nothing in the view state besides the record describes the scene
    expect(v.record?.tick).toBe(3);
    v = applyFrame(v, stateFrame(4, 0.9, null));
    expect(v.surgeme).toBe("—");
    expect(v.record?.lam).toBe(0.9);
  });

  it("hello and error frames update status fields", () => {
    let v = initialView();
    v = applyFrame(v, { v: 1, type: "hello", sid: 9, mode: "CIAC", dt: 0.05, seed: 1 });
    expect(v.sid).toBe(9);
    expect(v.connected).toBe(true);
    v = applyFrame(v, { type: "error", error: "boom" });
    expect(v.lastError).toBe("boom");
  });
});
