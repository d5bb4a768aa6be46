"""Deterministic kinematic world for the bimanual suturing scene.

The world advances at a fixed 20 Hz tick. Manipulators track their commands
with a first-order response (no dynamics, no overshoot), teleoperation delay
is an integer number of ticks, and marker occlusions follow a seeded two-state
Markov process. Every run appends one record per tick to an event log that
replays to bit-identical metrics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import DeviceId, Pose, Rot3, TaskFrame

LOG_FORMAT = "ciac-simlog"
LOG_VERSION = 1

TICK_SECONDS = 0.05  # 20 Hz


@dataclass(frozen=True)
class SimConfig:
    dt: float = TICK_SECONDS
    delay_ticks: int = 1                      # 50 ms teleoperation delay
    entry_xs: tuple = (0.015, 0.030, 0.045, 0.060)
    entry_y: float = 0.003
    fixed_height: float = 0.010
    track_time_constant: float = 0.100
    max_speed: float = 0.5
    tremor_sigma: float = 0.001
    sensor_noise_linear: float = 0.002     # m/s on measured linear velocity
    sensor_noise_angular: float = 0.05     # rad/s on measured angular velocity
    sensor_noise_gripper: float = 0.01     # rad on measured gripper angle
    occlusion_rate: float = 0.0
    occlusion_mean_ticks: int = 20
    lambda_cap: float = 0.8
    ramp_duration: float = 3.0
    rate_limit: float = 0.005
    frame_yaw: float = 0.5                    # task frame yaw in world, radians
    frame_origin: tuple = (0.05, 0.04, 0.01)
    seed: int = 0

    def __post_init__(self):
        if self.delay_ticks < 0:
            raise ValueError("delay must be a non-negative number of ticks")
        xs = self.entry_xs
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("entry offsets must be strictly increasing")

    def task_frame(self) -> TaskFrame:
        return TaskFrame(np.array(self.frame_origin),
                         Rot3.from_axis_angle([0, 0, 1], self.frame_yaw))

    def entry_points_task(self) -> tuple:
        return tuple(np.array([x, self.entry_y, 0.0]) for x in self.entry_xs)


@dataclass
class ManipulatorState:
    device: DeviceId
    pose: Pose
    linear_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gripper_angle: float = 0.0


class SimWorld:
    """Positions in world coordinates; commands are tracked first-order."""

    def __init__(self, cfg: SimConfig, psm1_start: Pose, psm2_start: Pose):
        self.cfg = cfg
        self.frame = cfg.task_frame()
        self.alpha = 1.0 - math.exp(-cfg.dt / cfg.track_time_constant)
        self.psm1 = ManipulatorState(DeviceId.PSM1, psm1_start)
        self.psm2 = ManipulatorState(DeviceId.PSM2, psm2_start)
        self.rejected_ticks = 0

    def _track(self, m: ManipulatorState, cmd_pos, cmd_rot: Rot3,
               cmd_grip: float) -> bool:
        cmd_pos = np.asarray(cmd_pos, dtype=float)
        if not np.all(np.isfinite(cmd_pos)):
            m.linear_velocity = np.zeros(3)
            m.angular_velocity = np.zeros(3)
            return False
        new_pos = m.pose.position + self.alpha * (cmd_pos - m.pose.position)
        step = new_pos - m.pose.position
        speed = np.linalg.norm(step) / self.cfg.dt
        if speed > self.cfg.max_speed:
            step = step * (self.cfg.max_speed / speed)
            new_pos = m.pose.position + step
        new_rot = m.pose.orientation.slerp(cmd_rot, self.alpha)
        m.linear_velocity = step / self.cfg.dt
        m.angular_velocity = new_rot.compose(m.pose.orientation.inverse()).log() / self.cfg.dt
        m.gripper_angle = m.gripper_angle + self.alpha * (cmd_grip - m.gripper_angle)
        m.pose = Pose(new_pos, new_rot)
        return True

    def step(self, psm1_cmd: tuple, psm2_cmd: tuple) -> bool:
        """Advance one tick. Each command is (position, rotation, gripper).

        A non-finite command leaves that manipulator at its previous pose and
        reports the rejection.
        """
        ok1 = self._track(self.psm1, *psm1_cmd)
        ok2 = self._track(self.psm2, *psm2_cmd)
        if not (ok1 and ok2):
            self.rejected_ticks += 1
        return ok1 and ok2


def traditional_command(hand_positions: np.ndarray, delay_ticks: int) -> np.ndarray:
    """Delayed direct following: command at tick t is the hand pose at t - delay."""
    if delay_ticks < 0:
        raise ValueError("delay must be non-negative")
    hand_positions = np.asarray(hand_positions, dtype=float)
    if delay_ticks == 0:
        return hand_positions.copy()
    out = np.empty_like(hand_positions)
    out[:delay_ticks] = hand_positions[0]
    out[delay_ticks:] = hand_positions[:-delay_ticks]
    return out


class DelayLine:
    """Fixed integer-tick delay buffer; replays the earliest sample until full."""

    def __init__(self, delay_ticks: int):
        if delay_ticks < 0:
            raise ValueError("delay must be non-negative")
        self.delay = delay_ticks
        self._buf: list = []

    def push(self, item):
        self._buf.append(item)
        if len(self._buf) > self.delay + 1:
            self._buf.pop(0)
        return self._buf[0]


class OcclusionProcess:
    """Two-state Markov chain over marker visibility, seeded and reproducible."""

    def __init__(self, rate: float, mean_episode_ticks: int, rng: np.random.Generator):
        if not (0.0 <= rate <= 1.0):
            raise ValueError("occlusion rate must lie in [0, 1]")
        if mean_episode_ticks < 1:
            raise ValueError("mean episode length must be at least one tick")
        self.rate = rate
        self.rng = rng
        self.p_exit = 1.0 / mean_episode_ticks
        if rate >= 1.0:
            self.p_enter = 1.0
            self.p_exit = 0.0
        elif rate <= 0.0:
            self.p_enter = 0.0
        else:
            self.p_enter = rate / (1.0 - rate) * self.p_exit
        self.occluded = bool(rng.random() < rate)

    def step(self) -> bool:
        """Advance one tick; returns True when the marker is visible."""
        if self.occluded:
            if self.rng.random() < self.p_exit:
                self.occluded = False
        else:
            if self.rng.random() < self.p_enter:
                self.occluded = True
        return not self.occluded


@dataclass(frozen=True)
class OcclusionTimeline:
    kd: np.ndarray
    ch: np.ndarray


def occlusion_timeline(rate: float, mean_episode_ticks: int, n_ticks: int,
                       seed: int) -> OcclusionTimeline:
    """Independent keydot / ChArUco visibility tracks drawn from the seed."""
    ss = np.random.SeedSequence(seed)
    kd_rng, ch_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    kd = OcclusionProcess(rate, mean_episode_ticks, kd_rng)
    ch = OcclusionProcess(rate, mean_episode_ticks, ch_rng)
    return OcclusionTimeline(
        kd=np.array([kd.step() for _ in range(n_ticks)]),
        ch=np.array([ch.step() for _ in range(n_ticks)]),
    )


class SimEventLog:
    """Append-only per-tick records plus a run header; replayable bit-exactly."""

    def __init__(self, header: dict):
        self.header = dict(header)
        self.header.setdefault("format", LOG_FORMAT)
        self.header.setdefault("version", LOG_VERSION)
        self.records: list[dict] = []

    def append(self, record: dict) -> None:
        if self.records and record["tick"] != self.records[-1]["tick"] + 1:
            raise ValueError("exactly one record per tick, in order")
        self.records.append(record)

    def to_lines(self) -> list[str]:
        lines = [canonical_json(self.header)]
        lines += [canonical_json(r) for r in self.records]
        return lines

    def dump(self, path) -> None:
        with open(path, "w") as f:
            for line in self.to_lines():
                f.write(line + "\n")

    @staticmethod
    def from_lines(lines) -> "SimEventLog":
        it = iter(lines)
        try:
            header = json.loads(next(it))
        except StopIteration:
            raise ValueError("empty event log") from None
        if header.get("format") != LOG_FORMAT:
            raise ValueError("not a simulation event log")
        if header.get("version") != LOG_VERSION:
            raise ValueError(f"unsupported log version {header.get('version')}")
        log = SimEventLog(header)
        for line in it:
            line = line.strip()
            if line:
                log.records.append(json.loads(line))
        return log

    @staticmethod
    def load(path) -> "SimEventLog":
        with open(path) as f:
            return SimEventLog.from_lines(f)


def canonical_json(obj) -> str:
    """Stable serialization: sorted keys, no whitespace variance, full-precision
    floats (repr round-trips exactly)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)
