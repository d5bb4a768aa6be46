// Top-down task-frame view: wound line along x, entry points, manipulators,
// the estimated-intent ghost and the blended command target. The z axis is a
// side gauge. Occluded markers render greyed.

import { Viewport, taskToScreen } from "./input.js";
import { StateRecord } from "./protocol.js";

const COLORS = {
  background: "#10141a",
  grid: "#1d242e",
  wound: "#b3542e",
  entry: "#d9a441",
  entryActive: "#ffd866",
  robot: "#4fc1ff",
  robotLeft: "#3a7bd5",
  hand: "#9aa7b3",
  ghost: "#7ee081",
  command: "#ff6188",
  text: "#c8d0d9",
};

export function drawScene(ctx: CanvasRenderingContext2D, vp: Viewport,
                          rec: StateRecord | null, entries: number[][],
                          entryY: number): void {
  ctx.fillStyle = COLORS.background;
  ctx.fillRect(0, 0, vp.width, vp.height);

  ctx.strokeStyle = COLORS.grid;
  ctx.lineWidth = 1;
  for (let gx = -0.02; gx <= 0.09; gx += 0.01) {
    const [px] = taskToScreen(gx, 0, vp);
    line(ctx, px, 0, px, vp.height);
  }
  for (let gy = -0.07; gy <= 0.05; gy += 0.01) {
    const [, py] = taskToScreen(0, gy, vp);
    line(ctx, 0, py, vp.width, py);
  }

  // the wound: a line along +x at y = 0
  ctx.strokeStyle = COLORS.wound;
  ctx.lineWidth = 3;
  const [wx0, wy0] = taskToScreen(0.005, 0, vp);
  const [wx1, wy1] = taskToScreen(0.07, 0, vp);
  line(ctx, wx0, wy0, wx1, wy1);

  entries.forEach((e, i) => {
    const [px, py] = taskToScreen(e[0], e[1] ?? entryY, vp);
    ctx.fillStyle = rec && rec.entry_index === i ? COLORS.entryActive : COLORS.entry;
    circle(ctx, px, py, rec && rec.entry_index === i ? 7 : 5);
    ctx.fillStyle = COLORS.text;
    ctx.font = "11px system-ui";
    ctx.fillText(String(i + 1), px + 8, py - 6);
  });

  if (!rec) return;

  const hand = taskToScreen(rec.hand_pos_task[0], rec.hand_pos_task[1], vp);
  ctx.strokeStyle = COLORS.hand;
  ctx.lineWidth = 1.5;
  crosshair(ctx, hand[0], hand[1], 8);

  const ghost = taskToScreen(rec.tau_h_hat_task[0], rec.tau_h_hat_task[1], vp);
  ctx.strokeStyle = COLORS.ghost;
  ctx.setLineDash([4, 3]);
  circleStroke(ctx, ghost[0], ghost[1], 9);
  ctx.setLineDash([]);

  const cmd = taskToScreen(rec.tau_cmd_task[0], rec.tau_cmd_task[1], vp);
  ctx.strokeStyle = COLORS.command;
  crosshair(ctx, cmd[0], cmd[1], 6);

  const robot = taskToScreen(rec.psm1_pos_task[0], rec.psm1_pos_task[1], vp);
  ctx.fillStyle = rec.kd ? COLORS.robot : greyed(COLORS.robot);
  circle(ctx, robot[0], robot[1], 8);
  const left = taskToScreen(rec.psm2_pos_task[0], rec.psm2_pos_task[1], vp);
  ctx.fillStyle = COLORS.robotLeft;
  circle(ctx, left[0], left[1], 6);

  drawZGauge(ctx, vp, rec);
}

function drawZGauge(ctx: CanvasRenderingContext2D, vp: Viewport,
                    rec: StateRecord): void {
  const x = vp.width - 26;
  const top = 20;
  const bottom = vp.height - 20;
  ctx.strokeStyle = COLORS.grid;
  ctx.lineWidth = 6;
  line(ctx, x, top, x, bottom);

  const zToY = (z: number) =>
    bottom - ((z - 0.0) / 0.04) * (bottom - top);
  ctx.lineWidth = 2;
  ctx.strokeStyle = COLORS.wound;
  line(ctx, x - 8, zToY(0), x + 8, zToY(0));   // tissue surface

  ctx.fillStyle = COLORS.robot;
  circle(ctx, x, zToY(rec.psm1_pos_task[2]), 5);
  ctx.strokeStyle = COLORS.ghost;
  circleStroke(ctx, x, zToY(rec.tau_h_hat_task[2]), 6);
  ctx.fillStyle = COLORS.text;
  ctx.font = "10px system-ui";
  ctx.fillText("z", x - 3, top - 6);
}

function greyed(_c: string): string {
  return "#555e66";
}

function line(ctx: CanvasRenderingContext2D, x0: number, y0: number,
              x1: number, y1: number): void {
  ctx.beginPath();
  ctx.moveTo(x0, y0);
  ctx.lineTo(x1, y1);
  ctx.stroke();
}

function circle(ctx: CanvasRenderingContext2D, x: number, y: number, r: number): void {
  ctx.beginPath();
  ctx.arc(x, y, r, 0, Math.PI * 2);
  ctx.fill();
}

function circleStroke(ctx: CanvasRenderingContext2D, x: number, y: number,
                      r: number): void {
  ctx.beginPath();
  ctx.arc(x, y, r, 0, Math.PI * 2);
  ctx.stroke();
}

function crosshair(ctx: CanvasRenderingContext2D, x: number, y: number,
                   r: number): void {
  line(ctx, x - r, y, x + r, y);
  line(ctx, x, y - r, x, y + r);
}
