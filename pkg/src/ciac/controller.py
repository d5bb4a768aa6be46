"""Per-surgeme shared-control paradigms and the convex blending law.

Each surgeme prescribes, per task-frame axis, where the robot's own target
lies (follow the human, hold a fixed value, or lock to an entry point) and
whether the live confidence applies on that axis. The commanded target is
the componentwise convex combination

    tau = lam * tau_r + (1 - lam) * tau_h_hat

so lam = 0 follows the predicted human target and lam = 1 ignores it. A
per-tick rate limit keeps commands continuous across surgeme switches.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .geometry import (
    EntryPointSet,
    Rot3,
    TaskFrame,
    aligned_tool_orientation,
    as_vec3,
    perpendicularity_error,
)
from .gestures import GestureClass


def clamp_confidence(lam) -> tuple[np.ndarray, bool]:
    """Clip confidence weights to [0, 1]; report whether clipping occurred."""
    lam = np.asarray(lam, dtype=float)
    clipped = np.clip(lam, 0.0, 1.0)
    return clipped, bool(np.any(clipped != lam))


def blend(tau_r, tau_h_hat, lam) -> np.ndarray:
    """Componentwise convex combination of robot and estimated human targets.

    Accepts (3,) vectors or stacked (n, 3) arrays. Out-of-range weights are
    clamped (never extrapolated) and reported through a warning.
    """
    tau_r = np.asarray(tau_r, dtype=float)
    tau_h_hat = np.asarray(tau_h_hat, dtype=float)
    lam, clamped = clamp_confidence(lam)
    if clamped:
        warnings.warn("confidence outside [0, 1] clamped in blend", stacklevel=2)
    return lam * tau_r + (1.0 - lam) * tau_h_hat


class TargetRule(Enum):
    """Where the robot's own target comes from, per axis."""

    HUMAN = "human"          # follow the estimated human target
    FIXED = "fixed"          # a constant coordinate (e.g. hover height)
    ENTRY_CURRENT = "entry_current"   # x of the active entry point
    ENTRY_NEXT = "entry_next"         # x of the following entry point
    HOLD = "hold"            # frozen where the surgeme was first recognized


@dataclass(frozen=True)
class AxisTarget:
    rule: TargetRule
    value: float = 0.0


@dataclass(frozen=True)
class SurgemeParadigm:
    """Per-axis robot target rules and confidence mask for one surgeme."""

    surgeme: GestureClass
    targets: tuple[AxisTarget, AxisTarget, AxisTarget]
    mask: tuple[int, int, int]   # 0 = confidence forced to zero, 1 = live
    pedal_orientation: bool = False

    def __post_init__(self):
        for t, m in zip(self.targets, self.mask):
            if m == 0 and t.rule is not TargetRule.HUMAN:
                raise ValueError("a zero-confidence axis must follow the human target")


def paradigm_for(surgeme: GestureClass, entries: EntryPointSet,
                 fixed_height: float = 0.010) -> SurgemeParadigm:
    """The shared-control paradigm for one surgeme.

    Positioning: free motion in the tissue-parallel plane at a fixed hover
    height, with confidence applied on z only. Push: the along-wound axis is
    locked to the active entry point to prevent laceration, other axes free.
    Pull: the manipulator is held steady near the next entry point on all
    axes. Hand-off: drawn toward the next entry point in x at hover height,
    free in y. Other: no constraint at all.
    """
    human = AxisTarget(TargetRule.HUMAN)
    if surgeme is GestureClass.POSITIONING:
        return SurgemeParadigm(
            surgeme,
            (human, human, AxisTarget(TargetRule.FIXED, fixed_height)),
            (0, 0, 1),
            pedal_orientation=True,
        )
    if surgeme is GestureClass.PUSH:
        return SurgemeParadigm(
            surgeme,
            (AxisTarget(TargetRule.ENTRY_CURRENT), human, human),
            (1, 0, 0),
            pedal_orientation=True,
        )
    if surgeme is GestureClass.PULL:
        return SurgemeParadigm(
            surgeme,
            (AxisTarget(TargetRule.ENTRY_NEXT), AxisTarget(TargetRule.HOLD),
             AxisTarget(TargetRule.HOLD)),
            (1, 1, 1),
        )
    if surgeme is GestureClass.HANDOFF:
        return SurgemeParadigm(
            surgeme,
            (AxisTarget(TargetRule.ENTRY_NEXT), human,
             AxisTarget(TargetRule.FIXED, fixed_height)),
            (1, 0, 1),
        )
    return SurgemeParadigm(surgeme, (human, human, human), (0, 0, 0))


@dataclass(frozen=True)
class BlendCommand:
    """One tick's positional command in the task frame."""

    tau: np.ndarray
    lambda_used: np.ndarray
    surgeme: GestureClass
    auto_orient: bool = False
    stale: bool = False
    lambda_clamped: bool = False
    entry_clamped: bool = False
    rate_limited: bool = False

    def __post_init__(self):
        object.__setattr__(self, "tau", as_vec3(self.tau))
        object.__setattr__(self, "lambda_used",
                           np.clip(np.asarray(self.lambda_used, dtype=float), 0.0, 1.0))


class SharedController:
    """Stateful 20 Hz arbitration loop for one manipulator.

    Holds the entry-point sequence, the frozen hold pose for Pull, the
    previous command for rate limiting, and the Pull -> Hand-off ->
    Positioning cycle bookkeeping that advances the entry index.
    """

    def __init__(self, entries: EntryPointSet, fixed_height: float = 0.010,
                 rate_limit: float = 0.005, advance_radius: float = 0.015):
        self.entries = entries
        self.fixed_height = fixed_height
        self.rate_limit = rate_limit
        self.advance_radius = advance_radius
        self.last_command: BlendCommand | None = None
        self.last_surgeme: GestureClass | None = None
        self.pull_hold: np.ndarray | None = None
        self._saw_pull = False
        self._saw_handoff_near_next = False

    def _resolve_target(self, axis: int, t: AxisTarget, tau_h: np.ndarray,
                        tool_position: np.ndarray) -> tuple[float, bool]:
        if t.rule is TargetRule.HUMAN:
            return float(tau_h[axis]), False
        if t.rule is TargetRule.FIXED:
            return t.value, False
        if t.rule is TargetRule.ENTRY_CURRENT:
            return float(self.entries.current()[axis]), False
        if t.rule is TargetRule.ENTRY_NEXT:
            point, clamped = self.entries.following()
            return float(point[axis]), clamped
        # HOLD: frozen at the tool pose seen when the surgeme was recognized.
        hold = self.pull_hold if self.pull_hold is not None else tool_position
        return float(hold[axis]), False

    def _track_cycle(self, surgeme: GestureClass, tool_position: np.ndarray) -> None:
        if surgeme is GestureClass.PULL:
            self._saw_pull = True
        elif surgeme is GestureClass.HANDOFF and self._saw_pull:
            nxt, _ = self.entries.following()
            if np.linalg.norm(tool_position - nxt) < self.advance_radius:
                self._saw_handoff_near_next = True
        elif surgeme is GestureClass.POSITIONING and self._saw_handoff_near_next:
            self.entries = self.entries.advanced()
            self._saw_pull = False
            self._saw_handoff_near_next = False

    def control_tick(self, surgeme: GestureClass, tau_h_hat, lambda_scalar: float,
                     tool_position, pedal: bool = False,
                     stale: bool = False) -> BlendCommand:
        """Produce the blended positional command for one tick.

        All positions are task-frame coordinates. Stale inputs repeat the
        previous command, flagged.
        """
        tau_h = as_vec3(tau_h_hat)
        tool_position = as_vec3(tool_position)
        if stale and self.last_command is not None:
            cmd = replace(self.last_command, stale=True)
            self.last_command = cmd
            return cmd

        if surgeme is GestureClass.PULL and self.last_surgeme is not GestureClass.PULL:
            self.pull_hold = tool_position.copy()
        self._track_cycle(surgeme, tool_position)

        paradigm = paradigm_for(surgeme, self.entries, self.fixed_height)
        lam_scalar_clamped, lam_clamped = clamp_confidence(lambda_scalar)
        lam = np.asarray(paradigm.mask, dtype=float) * float(lam_scalar_clamped)

        entry_clamped = False
        tau_r = np.empty(3)
        for axis, rule in enumerate(paradigm.targets):
            tau_r[axis], clamped = self._resolve_target(axis, rule, tau_h, tool_position)
            entry_clamped = entry_clamped or clamped

        tau = blend(tau_r, tau_h, lam)

        rate_limited = False
        if self.last_command is not None:
            delta = tau - self.last_command.tau
            step = float(np.linalg.norm(delta))
            if step > self.rate_limit:
                tau = self.last_command.tau + delta * (self.rate_limit / step)
                rate_limited = True

        cmd = BlendCommand(
            tau=tau,
            lambda_used=lam,
            surgeme=surgeme,
            auto_orient=bool(pedal and paradigm.pedal_orientation),
            lambda_clamped=lam_clamped,
            entry_clamped=entry_clamped,
            rate_limited=rate_limited,
        )
        self.last_command = cmd
        self.last_surgeme = surgeme
        return cmd


def auto_orient(current: Rot3, frame: TaskFrame,
                max_step_rad: float = math.radians(5.0)) -> list[Rot3]:
    """Shortest-rotation trajectory that brings the needle plane perpendicular
    to the wound. Empty when already aligned; the error decreases linearly
    along the trajectory."""
    err_rad = math.radians(perpendicularity_error(current, frame))
    if err_rad < 1e-9:
        return []
    target = aligned_tool_orientation(current, frame)
    n_steps = max(1, math.ceil(err_rad / max_step_rad))
    return [current.slerp(target, (k + 1) / n_steps) for k in range(n_steps)]
