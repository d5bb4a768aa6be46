"""Realtime bridge: one live simulation session per websocket operator.

The browser (or any client) connects to /session, sends input frames (hand
position in task coordinates, gripper, pedal, clutch, mode and occlusion
toggles) and receives one state frame per simulation tick. Inputs are
coalesced latest-wins per tick; the loop never waits for clients, and a
client whose send queue backs up is dropped rather than allowed to stall
the tick. Every applied input is recorded per tick, so a finished session
can be replayed offline into a bit-identical event log.
"""

from __future__ import annotations

import asyncio
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from . import __version__
from .geometry import Rot3, from_task_frame
from .session import CIAC, TRADITIONAL, HandSample, OperatorInput, Session
from .sim import SimConfig, canonical_json

PROTOCOL_VERSION = 1
SEND_QUEUE_LIMIT = 64
LEFT_REST_TASK = np.array([0.0, -0.045, 0.030])


def _default_input() -> dict:
    return {"pos_task": [0.0, 0.003, 0.010], "gripper": 0.2, "pedal": False,
            "clutch": False, "mode": None, "occlude": False, "lambda_cap": None}


class LiveInputAdapter:
    """Turns raw client input dicts into per-tick operator inputs.

    Velocities are finite differences of the applied positions, so the same
    adapter replays a recorded input stream into identical session inputs.
    """

    def __init__(self, cfg: SimConfig, hand_misalign_deg: float = 25.0):
        self.cfg = cfg
        self.frame = cfg.task_frame()
        self.last_pos_world: np.ndarray | None = None
        # a deliberately misaligned hand orientation: auto-orient has work to do
        self.hand_rot = self.frame.orientation.compose(
            Rot3.from_axis_angle([0, 0, 1], math.radians(hand_misalign_deg)))
        self.left_rot = self.frame.orientation

    def operator_input(self, raw: dict) -> OperatorInput:
        pos_world = from_task_frame(np.asarray(raw["pos_task"], dtype=float), self.frame)
        if self.last_pos_world is None:
            vel = np.zeros(3)
        else:
            vel = (pos_world - self.last_pos_world) / self.cfg.dt
        self.last_pos_world = pos_world
        right = HandSample(pos_world, vel, self.hand_rot, np.zeros(3),
                           float(raw.get("gripper", 0.2)))
        left = HandSample(from_task_frame(LEFT_REST_TASK, self.frame), np.zeros(3),
                          self.left_rot, np.zeros(3), 0.8)
        return OperatorInput(
            right=right, left=left, target=None,
            pedal=bool(raw.get("pedal", False)),
            clutch=bool(raw.get("clutch", False)),
            force_occlusion=bool(raw.get("occlude", False)),
        )


@dataclass
class LiveSession:
    sid: int
    session: Session
    adapter: LiveInputAdapter
    pending: dict = field(default_factory=_default_input)
    applied_inputs: list = field(default_factory=list)
    clients: list = field(default_factory=list)
    closed: bool = False

    def apply_pending(self) -> dict:
        raw = dict(self.pending)
        mode = raw.get("mode")
        if mode in (TRADITIONAL, CIAC):
            self.session.set_mode(mode)
        cap = raw.get("lambda_cap")
        self.session.lambda_cap_override = (float(cap) if cap is not None else None)
        record = self.session.tick(self.adapter.operator_input(raw))
        self.applied_inputs.append(raw)
        return record

    def state_message(self, record: dict) -> dict:
        return {
            "v": PROTOCOL_VERSION,
            "type": "state",
            "tick": record["tick"],
            "record": record,
            "entries_task": self.session.log.header["entries_task"],
            "entry_y": self.session.cfg.entry_y,
            "fixed_height": self.session.cfg.fixed_height,
            "mode": self.session.mode,
        }


def replay_inputs(cfg: SimConfig, raw_inputs: list, mode: str = CIAC,
                  lambda_source: str = "bayes", model=None) -> Session:
    """Feed a recorded client-input stream through a fresh session."""
    session = Session(cfg, mode=mode, lambda_source=lambda_source, model=model)
    adapter = LiveInputAdapter(cfg)
    for raw in raw_inputs:
        m = raw.get("mode")
        if m in (TRADITIONAL, CIAC):
            session.set_mode(m)
        cap = raw.get("lambda_cap")
        session.lambda_cap_override = (float(cap) if cap is not None else None)
        session.tick(adapter.operator_input(raw))
    return session


def create_app(tick_interval: float = 0.05, model=None) -> FastAPI:
    """The teleoperation playground service.

    tick_interval is wall-clock pacing only; simulated time is always the
    configured dt. Tests pace fast, deployments use the default 50 ms.
    """
    app = FastAPI(title="teleop-playground", version=__version__)
    app.state.tick_interval = tick_interval
    app.state.sessions: dict[int, LiveSession] = {}
    app.state.counter = itertools.count(1)
    app.state.model = model

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__,
                "protocol": PROTOCOL_VERSION,
                "active_sessions": len(app.state.sessions)}

    @app.get("/sessions/{sid}/recording")
    def recording(sid: int):
        live = app.state.sessions.get(sid)
        if live is None:
            return {"error": f"unknown session {sid}"}
        return {"sid": sid,
                "inputs": live.applied_inputs,
                "log_lines": live.session.log.to_lines(),
                "config": live.session.log.header["config"],
                "mode0": live.session.log.header["mode"],
                "lambda_source": live.session.log.header["lambda_source"]}

    @app.websocket("/session")
    async def session_endpoint(ws: WebSocket, mode: str = CIAC, seed: int = 0,
                               lambda_source: str = "bayes",
                               occlusion_rate: float = 0.1):
        await ws.accept()
        cfg = SimConfig(seed=seed, occlusion_rate=occlusion_rate)
        try:
            session = Session(cfg, mode=mode, lambda_source=lambda_source,
                              model=app.state.model)
        except ValueError as exc:
            await ws.send_text(json.dumps({"type": "error", "error": str(exc)}))
            await ws.close()
            return
        sid = next(app.state.counter)
        live = LiveSession(sid, session, LiveInputAdapter(cfg))
        app.state.sessions[sid] = live
        queue: asyncio.Queue = asyncio.Queue(maxsize=SEND_QUEUE_LIMIT)

        def enqueue(msg: dict) -> bool:
            try:
                queue.put_nowait(canonical_json(msg))
                return True
            except asyncio.QueueFull:
                # slow client: drop it rather than stall the loop
                live.closed = True
                return False

        async def sender():
            while True:
                await ws.send_text(await queue.get())

        async def ticker():
            while not live.closed:
                record = live.apply_pending()
                if not enqueue(live.state_message(record)):
                    break
                await asyncio.sleep(app.state.tick_interval)

        send_task = asyncio.create_task(sender())
        tick_task = asyncio.create_task(ticker())
        enqueue({"v": PROTOCOL_VERSION, "type": "hello", "sid": sid,
                 "mode": session.mode, "dt": cfg.dt, "seed": seed})
        try:
            while not live.closed:
                text = await ws.receive_text()
                try:
                    msg = json.loads(text)
                except json.JSONDecodeError:
                    enqueue({"type": "error", "error": "malformed frame"})
                    continue
                if msg.get("v") != PROTOCOL_VERSION:
                    enqueue({"type": "error",
                             "error": f"unsupported protocol version {msg.get('v')}"})
                    continue
                if msg.get("type") != "input":
                    enqueue({"type": "error",
                             "error": f"unknown type {msg.get('type')}"})
                    continue
                merged = dict(live.pending)
                for key in _default_input():
                    if key in msg:
                        merged[key] = msg[key]
                live.pending = merged
                enqueue({"type": "ack", "tick": session.tick_index})
        except WebSocketDisconnect:
            pass
        finally:
            live.closed = True
            tick_task.cancel()
            send_task.cancel()

    return app


app = create_app()
