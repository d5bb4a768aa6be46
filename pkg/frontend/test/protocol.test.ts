import { describe, expect, it } from "vitest";

import {
  PROTOCOL_VERSION,
  defaultInput,
  inputFrame,
  parseServerFrame,
  surgemeName,
} from "../src/protocol.js";

function stateFrame(tick: number): string {
  return JSON.stringify({
    v: PROTOCOL_VERSION,
    type: "state",
    tick,
    record: { tick, lam: 0.5, emitted_class: 2, probs: null },
    entries_task: [[0.015, 0.003, 0]],
    entry_y: 0.003,
    fixed_height: 0.01,
    mode: "CIAC",
  });
}

describe("parseServerFrame", () => {
  it("accepts current-version state frames", () => {
    const frame = parseServerFrame(stateFrame(7));
    expect(frame?.type).toBe("state");
  });

  it("rejects unknown versions", () => {
    const text = stateFrame(1).replace(`"v":${PROTOCOL_VERSION}`, '"v":99');
    expect(parseServerFrame(text)).toBeNull();
  });

  it("rejects malformed json and unknown types", () => {
    expect(parseServerFrame("nonsense")).toBeNull();
    expect(parseServerFrame('{"type":"launch-missiles"}')).toBeNull();
  });

  it("accepts acks and errors", () => {
    expect(parseServerFrame('{"type":"ack","tick":3}')?.type).toBe("ack");
    expect(parseServerFrame('{"type":"error","error":"x"}')?.type).toBe("error");
  });
});

describe("inputFrame", () => {
  it("carries the protocol version and all fields", () => {
    const text = inputFrame(defaultInput());
    const obj = JSON.parse(text);
    expect(obj.v).toBe(PROTOCOL_VERSION);
    expect(obj.type).toBe("input");
    expect(obj.pos_task).toHaveLength(3);
    expect(obj.lambda_cap).toBeNull();
  });
});

describe("surgemeName", () => {
  it("maps class codes to names", () => {
    expect(surgemeName(0)).toBe("Other");
    expect(surgemeName(2)).toBe("Push");
    expect(surgemeName(null)).toBe("—");
    expect(surgemeName(9)).toBe("—");
  });
});
