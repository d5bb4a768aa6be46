"""Scripted operators: deterministic stand-ins for human subjects.

An operator script is generated up front as a dense per-tick timeline of both
hands (positions, orientations, grippers), the operator's current motion goal,
the raw gesture label, and pedal state. Pre-generating the whole trace makes
paired experiments trivial: the traditional and assisted pipelines consume
byte-identical operator input.

Motions are minimum-jerk segments; generated trajectories are C1-continuous.
Hand tremor is not baked into the trajectory; it enters downstream as force
noise so the trajectories stay smooth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Rot3, TaskFrame, as_vec3
from .gestures import LabelStrategy, RawGestureLabel
from .sim import SimConfig


def minjerk_s(u: float) -> float:
    """Quintic ease curve: zero velocity and acceleration at both ends."""
    u = min(max(u, 0.0), 1.0)
    return u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)


def minimum_jerk(start, goal, duration: float, dt: float) -> np.ndarray:
    """Positions of a minimum-jerk segment sampled every dt (excludes start)."""
    start = as_vec3(start)
    goal = as_vec3(goal)
    n = max(1, round(duration / dt))
    out = np.empty((n, 3))
    for k in range(n):
        out[k] = start + (goal - start) * minjerk_s((k + 1) / n)
    return out


@dataclass
class MetricSpan:
    """A scored stretch of the script: a robot-side goal with tolerances."""

    kind: str                 # reach | positioning | push | pull | handoff
    device: str               # psm1 | psm2
    point_task: np.ndarray
    tol: float
    start_tick: int
    end_tick: int
    throw: int
    entry_index: int
    perp_max_deg: float | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "device": self.device,
            "point_task": [float(v) for v in self.point_task],
            "tol": self.tol, "start_tick": self.start_tick,
            "end_tick": self.end_tick, "throw": self.throw,
            "entry_index": self.entry_index, "perp_max_deg": self.perp_max_deg,
        }


@dataclass
class OperatorTrace:
    """Dense per-tick operator timeline in world coordinates."""

    dt: float
    times: np.ndarray
    right_pos: np.ndarray
    right_vel: np.ndarray
    right_rot: list
    right_angvel: np.ndarray
    right_grip: np.ndarray
    left_pos: np.ndarray
    left_vel: np.ndarray
    left_rot: list
    left_angvel: np.ndarray
    left_grip: np.ndarray
    raw_labels: list
    true_classes: np.ndarray
    targets: np.ndarray
    pedal: np.ndarray
    entry_hint: np.ndarray
    ramp_restart: np.ndarray
    phases: list = field(default_factory=list)
    metric_spans: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class OperatorProfile:
    """Skill parameters for the scripted operator."""

    move_speed: float = 0.030          # m/s nominal transit speed
    reaction_latency: float = 0.150
    settle_time: float = 0.6
    aim_sigma: float = 0.004           # initial reach aim error, per axis
    aim_shrink: float = 0.30           # aim error decay per correction cycle
    n_corrections: int = 3
    positioning_err_deg: tuple = (6.0, 2.0)    # orientation residual (mean, std)
    push_err_deg: tuple = (20.0, 6.0)
    reach_err_deg: tuple = (5.0, 2.0)
    duration_jitter: float = 0.15
    pedal_habit: bool = True
    p_stage: float = 0.35              # optional staging move (G5)
    p_orient: float = 0.35             # optional needle-orient fiddle (G8)
    p_slack: float = 0.40              # optional extra thread slack (G10)
    p_filler: float = 0.90             # idle/other filler per throw


class _Builder:
    """Accumulates the timeline tick by tick, in task-frame coordinates."""

    def __init__(self, cfg: SimConfig, rng: np.random.Generator,
                 right_start, left_start):
        self.cfg = cfg
        self.dt = cfg.dt
        self.rng = rng
        self.r_pos = as_vec3(right_start)
        self.l_pos = as_vec3(left_start)
        self.r_rot = Rot3.identity()     # tool x along the wound = aligned
        self.l_rot = Rot3.identity()
        self.r_grip = 0.2
        self.l_grip = 0.8
        self.rows: list[dict] = []
        self.phases: list[dict] = []
        self.spans: list[MetricSpan] = []

    # -- low-level -----------------------------------------------------------

    def _emit(self, label, target, pedal, entry_hint, ramp_restart=False):
        self.rows.append(dict(
            label=label, r_pos=self.r_pos.copy(), l_pos=self.l_pos.copy(),
            r_rot=self.r_rot, l_rot=self.l_rot,
            r_grip=self.r_grip, l_grip=self.l_grip,
            target=as_vec3(target).copy(), pedal=bool(pedal),
            entry_hint=int(entry_hint), ramp_restart=bool(ramp_restart),
        ))

    def jitter(self, duration: float, frac: float) -> float:
        return duration * (1.0 + self.rng.uniform(-frac, frac))

    def residual_rotation(self, err_deg: tuple) -> Rot3:
        """Small rotation tilting the tool x-axis off the wound by ~err_deg."""
        angle = math.radians(max(0.5, self.rng.normal(*err_deg)))
        theta = self.rng.uniform(0, 2 * math.pi)
        axis = np.array([0.0, math.cos(theta), math.sin(theta)])
        return Rot3.from_axis_angle(axis, angle)

    def phase(self, label: RawGestureLabel, ticks_fn, throw: int,
              entry_hint: int, name: str | None = None):
        start = len(self.rows)
        ticks_fn()
        self.phases.append(dict(label=label.name, start=start,
                                end=len(self.rows), throw=throw, name=name))

    # -- motion vocabulary -----------------------------------------------------

    def hold(self, label, duration, throw, entry_hint, pedal=False, target=None,
             ramp_restart=False):
        n = max(1, round(duration / self.dt))
        tgt = self.r_pos if target is None else as_vec3(target)

        def run():
            for k in range(n):
                self._emit(label, tgt, pedal, entry_hint,
                           ramp_restart=(ramp_restart and k == 0))
        self.phase(label, run, throw, entry_hint)

    def move(self, label, hand: str, goal, duration, throw, entry_hint,
             pedal=False, orient_to: Rot3 | None = None, grip_to: float | None = None,
             settle: float = 0.0, target=None):
        goal = as_vec3(goal)
        n = max(2, round(duration / self.dt))
        n_settle = round(settle / self.dt)
        start_pos = (self.r_pos if hand == "right" else self.l_pos).copy()
        start_rot = self.r_rot if hand == "right" else self.l_rot
        start_grip = self.r_grip if hand == "right" else self.l_grip
        tgt = goal if target is None else as_vec3(target)

        def run():
            for k in range(n + n_settle):
                s = minjerk_s((k + 1) / n)
                pos = start_pos + (goal - start_pos) * s
                if hand == "right":
                    self.r_pos = pos
                    if orient_to is not None:
                        self.r_rot = start_rot.slerp(orient_to, s)
                    if grip_to is not None:
                        self.r_grip = start_grip + (grip_to - start_grip) * s
                else:
                    self.l_pos = pos
                    if orient_to is not None:
                        self.l_rot = start_rot.slerp(orient_to, s)
                    if grip_to is not None:
                        self.l_grip = start_grip + (grip_to - start_grip) * s
                self._emit(label, tgt, pedal, entry_hint)
        self.phase(label, run, throw, entry_hint)

    def push_arc(self, label, x_lock, y_entry, height, depth, duration, throw,
                 entry_hint, pedal, spin_rad, settle=0.0):
        """Circular needle drive in the y-z plane at fixed x: enter on the
        +y side, dip below the tissue, emerge on the -y side."""
        n = max(2, round(duration / self.dt))
        n_settle = round(settle / self.dt)
        base_rot = self.r_rot
        end = np.array([x_lock, -y_entry, height])

        def run():
            for k in range(n + n_settle):
                s = minjerk_s((k + 1) / n)
                phi = math.pi * s
                y = y_entry * math.cos(phi)
                z = height * math.cos(phi) ** 2 - depth * math.sin(phi) ** 2
                self.r_pos = np.array([x_lock, y, z])
                self.r_rot = Rot3.from_axis_angle([1.0, 0, 0], spin_rad * s).compose(base_rot)
                self._emit(label, end, pedal, entry_hint)
        self.phase(label, run, throw, entry_hint)

    def wiggle(self, label, hand, amplitude, duration, throw, entry_hint,
               n_moves=3, grip_jitter=0.0):
        """A chain of small random moves: filler material between surgemes."""
        for _ in range(n_moves):
            offset = self.rng.normal(0.0, amplitude, 3)
            base = self.r_pos if hand == "right" else self.l_pos
            grip_to = None
            if grip_jitter:
                cur = self.r_grip if hand == "right" else self.l_grip
                grip_to = float(np.clip(cur + self.rng.normal(0, grip_jitter), 0.05, 1.0))
            self.move(label, hand, base + offset, duration / n_moves, throw,
                      entry_hint, grip_to=grip_to)

    def span(self, kind, device, point, tol, start_tick, throw, entry_index,
             perp_max_deg=None):
        self.spans.append(MetricSpan(
            kind=kind, device=device, point_task=as_vec3(point), tol=tol,
            start_tick=start_tick, end_tick=len(self.rows), throw=throw,
            entry_index=entry_index, perp_max_deg=perp_max_deg))

    # -- assembly ---------------------------------------------------------------

    def build(self, frame: TaskFrame) -> OperatorTrace:
        n = len(self.rows)
        if n == 0:
            raise ValueError("empty operator script")
        rot_f = frame.orientation

        def to_world_pos(p):
            return rot_f.m @ p + frame.origin

        r_pos = np.array([to_world_pos(r["r_pos"]) for r in self.rows])
        l_pos = np.array([to_world_pos(r["l_pos"]) for r in self.rows])
        targets = np.array([to_world_pos(r["target"]) for r in self.rows])
        r_rot = [rot_f.compose(r["r_rot"]) for r in self.rows]
        l_rot = [rot_f.compose(r["l_rot"]) for r in self.rows]
        r_vel = np.gradient(r_pos, self.dt, axis=0) if n > 1 else np.zeros((n, 3))
        l_vel = np.gradient(l_pos, self.dt, axis=0) if n > 1 else np.zeros((n, 3))

        def angvel(rots):
            out = np.zeros((n, 3))
            for k in range(n - 1):
                out[k] = rots[k + 1].compose(rots[k].inverse()).log() / self.dt
            if n > 1:
                out[-1] = out[-2]
            return out

        raw = [r["label"] for r in self.rows]
        strategy = LabelStrategy.STRATEGY_2
        classes = np.array([strategy.apply(lbl).value for lbl in raw])
        return OperatorTrace(
            dt=self.dt,
            times=np.arange(1, n + 1) * self.dt,
            right_pos=r_pos, right_vel=r_vel, right_rot=r_rot,
            right_angvel=angvel(r_rot),
            right_grip=np.array([r["r_grip"] for r in self.rows]),
            left_pos=l_pos, left_vel=l_vel, left_rot=l_rot,
            left_angvel=angvel(l_rot),
            left_grip=np.array([r["l_grip"] for r in self.rows]),
            raw_labels=raw, true_classes=classes, targets=targets,
            pedal=np.array([r["pedal"] for r in self.rows]),
            entry_hint=np.array([r["entry_hint"] for r in self.rows]),
            ramp_restart=np.array([r["ramp_restart"] for r in self.rows]),
            phases=self.phases, metric_spans=self.spans,
        )


def _move_duration(profile: OperatorProfile, dist: float) -> float:
    return float(np.clip(dist / profile.move_speed, 0.9, 4.0))


def build_suturing_trace(cfg: SimConfig, profile: OperatorProfile, seed: int,
                         throws: int = 4) -> OperatorTrace:
    """Four-throw bimanual suturing script with raw gesture labels.

    Each throw runs positioning, push, pull and hand-off on consecutive entry
    points, interleaved with optional secondary gestures (staging moves,
    needle orienting, thread slack) and filler material.
    """
    rng = np.random.default_rng(seed)
    entries = cfg.entry_points_task()
    if throws > len(entries):
        raise ValueError("more throws than entry points")
    h = cfg.fixed_height
    y_e = cfg.entry_y
    left_rest = np.array([0.0, -0.045, 0.030])
    b = _Builder(cfg, rng, right_start=np.array([0.0, y_e, h]), left_start=left_rest)
    jit = profile.duration_jitter
    pedal = profile.pedal_habit

    b.hold(RawGestureLabel.G1, 1.2, throw=0, entry_hint=0)
    for j in range(throws):
        entry = entries[j]
        nxt = entries[min(j + 1, len(entries) - 1)]
        p_goal = np.array([entry[0], y_e, h])

        if rng.random() < (0.6 if j == 0 else profile.p_stage):
            stage = p_goal + np.array([rng.uniform(-0.008, 0.008), 0.012, 0.012])
            b.move(RawGestureLabel.G5, "right", stage,
                   b.jitter(1.8, jit), j, j)

        # positioning: travel to the hover point above the entry
        res = b.residual_rotation(profile.positioning_err_deg)
        t0 = len(b.rows)
        b.move(RawGestureLabel.G2, "right", p_goal, b.jitter(2.8, jit), j, j,
               pedal=pedal, orient_to=res, settle=profile.settle_time)
        b.span("positioning", "psm1", p_goal, 0.0015, t0, j, j)

        if rng.random() < profile.p_orient:
            fiddle = b.residual_rotation(profile.positioning_err_deg)
            b.move(RawGestureLabel.G8, "right", b.r_pos + rng.normal(0, 0.001, 3),
                   b.jitter(1.6, jit), j, j, orient_to=fiddle, grip_to=0.35)

        # push: circular drive across the wound, x held at the entry
        push_res = b.residual_rotation(profile.push_err_deg)
        b.move(RawGestureLabel.G2, "right", b.r_pos, 0.2, j, j,
               pedal=pedal, orient_to=push_res)
        t0 = len(b.rows)
        exit_point = np.array([entry[0], -y_e, h])
        b.push_arc(RawGestureLabel.G3, entry[0], y_e, h, 0.004,
                   b.jitter(3.6, jit), j, j, pedal,
                   spin_rad=rng.uniform(1.2, 1.9), settle=profile.settle_time)
        b.span("push", "psm1", exit_point, 0.0015, t0, j, j)

        # pull: the left hand grasps at the exit and draws the thread away
        t0 = len(b.rows)
        grasp = exit_point + np.array([0.0, -0.002, 0.002])
        b.move(RawGestureLabel.G6, "left", grasp, b.jitter(1.2, jit), j, j,
               grip_to=0.15)
        pull_end = grasp + np.array([rng.uniform(-0.004, 0.004), -0.035, 0.025])
        b.move(RawGestureLabel.G6, "left", pull_end, b.jitter(2.2, jit), j, j,
               settle=profile.settle_time)
        b.span("pull", "psm2", pull_end, 0.003, t0, j, j)

        if rng.random() < profile.p_slack:
            b.wiggle(RawGestureLabel.G10, "left", 0.006, b.jitter(1.8, jit), j, j)

        # hand-off: both hands meet near the next entry point
        t0 = len(b.rows)
        meet = np.array([nxt[0], y_e, h])
        b.move(RawGestureLabel.G4, "left", meet + np.array([0.0, -0.004, 0.006]),
               b.jitter(1.3, jit), j, j, grip_to=0.85)
        b.move(RawGestureLabel.G4, "right", meet, b.jitter(1.3, jit), j, j,
               grip_to=0.2, settle=profile.settle_time)
        b.span("handoff", "psm1", meet, 0.0015, t0, j, j)

        if rng.random() < profile.p_filler:
            filler = rng.choice([RawGestureLabel.G1, RawGestureLabel.G9,
                                 RawGestureLabel.G11])
            b.wiggle(filler, "right", 0.004, b.jitter(2.4, jit), j, j,
                     grip_jitter=0.05)
            b.move(filler, "left", left_rest, b.jitter(1.4, jit), j, j,
                   grip_to=0.8)
    return b.build(cfg.task_frame())


def build_reaching_trace(cfg: SimConfig, profile: OperatorProfile,
                         seed: int) -> OperatorTrace:
    """Target-reaching script: positioning plus insertion at each entry point.

    The operator aims with a per-entry error, descends, then runs shrinking
    correction moves, imitating visual homing under poor depth perception.
    """
    rng = np.random.default_rng(seed)
    entries = cfg.entry_points_task()
    h = cfg.fixed_height
    y_e = cfg.entry_y
    b = _Builder(cfg, rng, right_start=np.array([0.0, y_e, h]),
                 left_start=np.array([0.0, -0.045, 0.030]))
    jit = profile.duration_jitter
    pedal = profile.pedal_habit

    for j, entry in enumerate(entries):
        t0 = len(b.rows)
        aim_err = rng.normal(0.0, profile.aim_sigma, 3)
        hover = entry + np.array([0.0, 0.0, h])
        res = b.residual_rotation(profile.reach_err_deg)
        b.hold(RawGestureLabel.G1, profile.reaction_latency, j, j,
               target=b.r_pos, ramp_restart=True)
        dist = float(np.linalg.norm(hover + aim_err - b.r_pos))
        b.move(RawGestureLabel.G2, "right", hover + aim_err,
               b.jitter(_move_duration(profile, dist), jit), j, j,
               pedal=pedal, orient_to=res)
        b.move(RawGestureLabel.G3, "right", entry + aim_err,
               b.jitter(1.2, jit), j, j, pedal=pedal,
               settle=profile.settle_time)
        err = aim_err
        for _ in range(profile.n_corrections):
            err = err * profile.aim_shrink + rng.normal(0.0, 0.0003, 3)
            b.move(RawGestureLabel.G3, "right", entry + err,
                   b.jitter(0.9, jit), j, j, pedal=pedal,
                   settle=0.45)
        b.span("reach", "psm1", entry, 0.0015, t0, j, j, perp_max_deg=10.0)
        if j + 1 < len(entries):
            b.move(RawGestureLabel.G11, "right", entry + np.array([0.0, 0.0, h]),
                   b.jitter(1.0, jit), j, j)
    return b.build(cfg.task_frame())
