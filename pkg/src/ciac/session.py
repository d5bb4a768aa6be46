"""The per-tick control pipeline: one session drives one simulated scene.

Each tick consumes one operator input (scripted or live), runs the delayed
hand stream through intent estimation, updates marker-visibility trust,
classifies the current surgeme, arbitrates the command through the active
paradigm, and advances the world. Every tick appends one record to the event
log; the log alone is enough to recompute all metrics.

Modes: TRADITIONAL follows the delayed hand directly; CIAC blends the robot's
own per-surgeme target with the estimated human target, weighted by the
confidence. The confidence comes either from the Beta trust engine over
marker visibility ("bayes") or from a linear ramp to the cap ("ramp"),
the uniform-assistance protocol used in target-reaching comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .confidence import ConfidenceEngine, VisibilitySample
from .controller import SharedController
from .geometry import (
    DeviceId,
    EntryPointSet,
    KinematicSample,
    Pose,
    Rot3,
    aligned_tool_orientation,
    as_vec3,
    from_task_frame,
    perpendicularity_error,
    to_task_frame,
)
from .gestures import GestureClass
from .intent import ImpedanceParams, IntentEstimator, KalmanConfig
from .operator import OperatorTrace
from .sim import DelayLine, OcclusionProcess, SimConfig, SimEventLog, SimWorld
from .stream import StreamingClassifier

TRADITIONAL = "TRADITIONAL"
CIAC = "CIAC"

LIVE_INTENT_HORIZON = 0.5  # seconds of velocity lookahead for live operators


@dataclass(frozen=True)
class HandSample:
    """One device's instantaneous state in world coordinates."""

    position: np.ndarray
    velocity: np.ndarray
    orientation: Rot3
    angular_velocity: np.ndarray
    gripper: float

    def __post_init__(self):
        object.__setattr__(self, "position", as_vec3(self.position))
        object.__setattr__(self, "velocity", as_vec3(self.velocity))
        object.__setattr__(self, "angular_velocity", as_vec3(self.angular_velocity))


@dataclass(frozen=True)
class OperatorInput:
    """Everything the operator contributes in one tick."""

    right: HandSample
    left: HandSample
    target: np.ndarray | None = None        # world; None -> velocity lookahead
    raw_label: str | None = None
    true_class: int | None = None
    pedal: bool = False
    clutch: bool = False
    entry_hint: int | None = None
    ramp_restart: bool = False
    force_occlusion: bool = False


def trace_inputs(trace: OperatorTrace):
    """Adapt a scripted operator trace into per-tick inputs."""
    for k in range(len(trace)):
        yield OperatorInput(
            right=HandSample(trace.right_pos[k], trace.right_vel[k],
                             trace.right_rot[k], trace.right_angvel[k],
                             float(trace.right_grip[k])),
            left=HandSample(trace.left_pos[k], trace.left_vel[k],
                            trace.left_rot[k], trace.left_angvel[k],
                            float(trace.left_grip[k])),
            target=trace.targets[k],
            raw_label=trace.raw_labels[k].name,
            true_class=int(trace.true_classes[k]),
            pedal=bool(trace.pedal[k]),
            entry_hint=int(trace.entry_hint[k]),
            ramp_restart=bool(trace.ramp_restart[k]),
        )


class Session:
    """One manipulator pair, one operator, one mode; single-threaded."""

    def __init__(self, cfg: SimConfig, mode: str = CIAC, lambda_source: str = "bayes",
                 model=None, use_true_labels: bool = False,
                 paradigm_override: GestureClass | None = None,
                 collect_device_rows: bool = False, header_extra: dict | None = None):
        if mode not in (TRADITIONAL, CIAC):
            raise ValueError(f"unknown mode {mode!r}")
        if lambda_source not in ("bayes", "ramp"):
            raise ValueError(f"unknown lambda source {lambda_source!r}")
        self.cfg = cfg
        self.mode = mode
        self.lambda_source = lambda_source
        self.frame = cfg.task_frame()
        self.entry_points = cfg.entry_points_task()
        self.paradigm_override = paradigm_override
        self.use_true_labels = use_true_labels

        ss = np.random.SeedSequence(cfg.seed)
        tremor_ss, kd_ss, ch_ss, sensor_ss = ss.spawn(4)
        self.tremor_rng = np.random.default_rng(tremor_ss)
        self.sensor_rng = np.random.default_rng(sensor_ss)
        self.kd_occ = OcclusionProcess(cfg.occlusion_rate, cfg.occlusion_mean_ticks,
                                       np.random.default_rng(kd_ss))
        self.ch_occ = OcclusionProcess(cfg.occlusion_rate, cfg.occlusion_mean_ticks,
                                       np.random.default_rng(ch_ss))

        self.imp = ImpedanceParams.default()
        self.estimator = IntentEstimator(self.imp, KalmanConfig())
        self.trust = ConfidenceEngine(lambda_cap=cfg.lambda_cap)
        self.controller = SharedController(
            EntryPointSet(self.entry_points), fixed_height=cfg.fixed_height,
            rate_limit=cfg.rate_limit)
        self.classifier = (StreamingClassifier(model.predict_proba)
                           if model is not None else None)

        self.delay = DelayLine(cfg.delay_ticks)
        self.world: SimWorld | None = None
        self.tick_index = 0
        self.ramp_elapsed = 0.0
        self.collect_device_rows = collect_device_rows
        self.device_rows: list = []
        self._frozen_cmd: tuple | None = None
        # runtime overrides (teleoperation playground): applied next tick
        self.lambda_cap_override: float | None = None

        header = {
            "mode": mode,
            "lambda_source": lambda_source,
            "seed": cfg.seed,
            "config": _config_dict(cfg),
            "entries_task": [[float(v) for v in p] for p in self.entry_points],
            "paradigm_override": paradigm_override.name if paradigm_override else None,
            "uses_model": model is not None,
            "use_true_labels": use_true_labels,
        }
        header.update(header_extra or {})
        self.log = SimEventLog(header)

    # -- helpers ---------------------------------------------------------------

    def set_mode(self, mode: str) -> None:
        """Switch between traditional and assisted control; takes effect on the
        next tick, estimator and trust state carry over warm."""
        if mode not in (TRADITIONAL, CIAC):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode

    def _measured_stream_features(self, psm1, psm2, right: HandSample,
                                  left: HandSample) -> np.ndarray:
        """The 28 classifier features, with sensor noise on the measured
        velocity and gripper channels (device order PSM1, PSM2, SIGMA_R, SIGMA_L)."""
        cfg = self.cfg
        feats = []
        for lin, ang, grip in (
            (psm1.linear_velocity, psm1.angular_velocity, psm1.gripper_angle),
            (psm2.linear_velocity, psm2.angular_velocity, psm2.gripper_angle),
            (right.velocity, right.angular_velocity, right.gripper),
            (left.velocity, left.angular_velocity, left.gripper),
        ):
            noise = self.sensor_rng.normal(0.0, 1.0, 7)
            feats.append(np.concatenate([
                lin + cfg.sensor_noise_linear * noise[:3],
                ang + cfg.sensor_noise_angular * noise[3:6],
                [grip + cfg.sensor_noise_gripper * noise[6]],
            ]))
        return np.concatenate(feats)

    def _lambda(self, restart: bool, force_occlusion: bool) -> tuple[float, bool, bool]:
        visible_kd = self.kd_occ.step()
        visible_ch = self.ch_occ.step()
        if force_occlusion:
            visible_kd = visible_ch = False
        lam_bayes = self.trust.step(VisibilitySample(visible_kd, visible_ch))
        if self.lambda_source == "ramp":
            if restart:
                self.ramp_elapsed = 0.0
            lam = self.cfg.lambda_cap * min(1.0, self.ramp_elapsed / self.cfg.ramp_duration)
            self.ramp_elapsed += self.cfg.dt
        else:
            lam = lam_bayes
        if self.lambda_cap_override is not None:
            lam = min(lam, self.lambda_cap_override)
        return lam, visible_kd, visible_ch

    # -- the tick ----------------------------------------------------------------

    def tick(self, op: OperatorInput) -> dict:
        cfg = self.cfg
        delayed: OperatorInput = self.delay.push(op)

        if self.world is None:
            self.world = SimWorld(cfg, Pose(delayed.right.position, delayed.right.orientation),
                                  Pose(delayed.left.position, delayed.left.orientation))
        psm1, psm2 = self.world.psm1, self.world.psm2

        # interaction force at the (delayed) hand, from the scripted target or
        # a velocity-lookahead proxy for live operators
        if delayed.target is not None:
            target = as_vec3(delayed.target)
        else:
            target = delayed.right.position + LIVE_INTENT_HORIZON * delayed.right.velocity
        tremor = self.imp.l1 @ self.tremor_rng.normal(0.0, cfg.tremor_sigma, 3)
        u_h = self.imp.force_for_target(delayed.right.position,
                                        delayed.right.velocity, target) + tremor
        est = self.estimator.step(u_h, delayed.right.position,
                                  delayed.right.velocity,
                                  timestamp=(self.tick_index + 1) * cfg.dt)
        tau_h_task = to_task_frame(est.tau_h_hat, self.frame)

        lam, kd, ch = self._lambda(op.ramp_restart, op.force_occlusion)

        features = self._measured_stream_features(psm1, psm2, delayed.right, delayed.left)
        emitted = None
        probs = None
        if self.mode == CIAC:
            if self.use_true_labels and op.true_class is not None:
                emitted = GestureClass.from_code(op.true_class)
            elif self.classifier is not None:
                emitted, avg = self.classifier.step(features)
                probs = avg
            else:
                emitted = GestureClass.OTHER

        if self.collect_device_rows:
            self.device_rows.append(self._device_row(psm1, psm2, delayed, features))

        surgeme = self.paradigm_override if self.paradigm_override is not None else emitted
        tool_task = to_task_frame(psm1.pose.position, self.frame)

        if self.mode == CIAC:
            if (self.paradigm_override is not None and op.entry_hint is not None
                    and op.entry_hint != self.controller.entries.index):
                self.controller.entries = EntryPointSet(self.entry_points, op.entry_hint)
            cmd = self.controller.control_tick(
                surgeme if surgeme is not None else GestureClass.OTHER,
                tau_h_task, lam, tool_task, pedal=op.pedal)
            cmd_pos_world = from_task_frame(cmd.tau, self.frame)
            if cmd.auto_orient:
                cmd_rot = aligned_tool_orientation(psm1.pose.orientation, self.frame)
            else:
                cmd_rot = delayed.right.orientation
            auto = cmd.auto_orient
            entry_index = self.controller.entries.index
            tau_cmd_task = cmd.tau
            lam_axes = cmd.lambda_used
        else:
            cmd_pos_world = delayed.right.position
            cmd_rot = delayed.right.orientation
            auto = False
            entry_index = op.entry_hint if op.entry_hint is not None else 0
            tau_cmd_task = to_task_frame(cmd_pos_world, self.frame)
            lam_axes = np.zeros(3)

        if op.clutch:
            if self._frozen_cmd is None:
                self._frozen_cmd = (psm1.pose.position.copy(), psm1.pose.orientation,
                                    psm1.gripper_angle)
            cmd_pos_world, cmd_rot, grip_cmd = self._frozen_cmd
            tau_cmd_task = to_task_frame(cmd_pos_world, self.frame)
        else:
            self._frozen_cmd = None
            grip_cmd = delayed.right.gripper

        ok = self.world.step(
            (cmd_pos_world, cmd_rot, grip_cmd),
            (delayed.left.position, delayed.left.orientation, delayed.left.gripper))

        record = {
            "tick": self.tick_index,
            "t": round((self.tick_index + 1) * cfg.dt, 6),
            "mode": self.mode,
            "raw_label": op.raw_label,
            "true_class": op.true_class,
            "emitted_class": None if emitted is None else emitted.value,
            "probs": None if probs is None else [float(p) for p in probs],
            "lam": float(lam),
            "lam_axes": [float(v) for v in lam_axes],
            "kd": bool(kd),
            "ch": bool(ch),
            "hand_pos_task": _l(to_task_frame(delayed.right.position, self.frame)),
            "tau_h_hat_task": _l(tau_h_task),
            "tau_cmd_task": _l(tau_cmd_task),
            "psm1_pos_task": _l(to_task_frame(psm1.pose.position, self.frame)),
            "psm1_perp_deg": float(perpendicularity_error(psm1.pose.orientation, self.frame)),
            "psm2_pos_task": _l(to_task_frame(psm2.pose.position, self.frame)),
            "entry_index": int(entry_index),
            "pedal": bool(op.pedal),
            "clutch": bool(op.clutch),
            "auto_orient": bool(auto),
            "rejected": not ok,
        }
        self.log.append(record)
        self.tick_index += 1
        return record

    def _device_row(self, psm1, psm2, delayed: OperatorInput,
                    features: np.ndarray) -> dict:
        t = (self.tick_index + 1) * self.cfg.dt
        return {
            "t": t,
            "psm1": KinematicSample(DeviceId.PSM1, psm1.pose.position,
                                    psm1.pose.orientation, features[0:3],
                                    features[3:6], float(features[6]), t),
            "psm2": KinematicSample(DeviceId.PSM2, psm2.pose.position,
                                    psm2.pose.orientation, features[7:10],
                                    features[10:13], float(features[13]), t),
            "sigma_r": KinematicSample(DeviceId.SIGMA_R, delayed.right.position,
                                       delayed.right.orientation, features[14:17],
                                       features[17:20], float(features[20]), t),
            "sigma_l": KinematicSample(DeviceId.SIGMA_L, delayed.left.position,
                                       delayed.left.orientation, features[21:24],
                                       features[24:27], float(features[27]), t),
            "raw_label": delayed.raw_label,
        }

    def run(self, inputs) -> SimEventLog:
        for op in inputs:
            self.tick(op)
        return self.log


def _l(v) -> list:
    return [float(x) for x in v]


def _config_dict(cfg: SimConfig) -> dict:
    return {
        "dt": cfg.dt, "delay_ticks": cfg.delay_ticks,
        "entry_xs": list(cfg.entry_xs), "entry_y": cfg.entry_y,
        "fixed_height": cfg.fixed_height,
        "track_time_constant": cfg.track_time_constant,
        "max_speed": cfg.max_speed, "tremor_sigma": cfg.tremor_sigma,
        "sensor_noise_linear": cfg.sensor_noise_linear,
        "sensor_noise_angular": cfg.sensor_noise_angular,
        "sensor_noise_gripper": cfg.sensor_noise_gripper,
        "occlusion_rate": cfg.occlusion_rate,
        "occlusion_mean_ticks": cfg.occlusion_mean_ticks,
        "lambda_cap": cfg.lambda_cap, "ramp_duration": cfg.ramp_duration,
        "rate_limit": cfg.rate_limit, "frame_yaw": cfg.frame_yaw,
        "frame_origin": list(cfg.frame_origin), "seed": cfg.seed,
    }


def run_scripted(trace: OperatorTrace, cfg: SimConfig, mode: str,
                 lambda_source: str = "bayes", model=None,
                 use_true_labels: bool = False,
                 paradigm_override: GestureClass | None = None,
                 collect_device_rows: bool = False,
                 header_extra: dict | None = None) -> Session:
    """Run a whole scripted trace through a fresh session; returns the session."""
    extra = {"metric_spans": [s.to_dict() for s in trace.metric_spans],
             "phases": trace.phases}
    extra.update(header_extra or {})
    session = Session(cfg, mode=mode, lambda_source=lambda_source, model=model,
                      use_true_labels=use_true_labels,
                      paradigm_override=paradigm_override,
                      collect_device_rows=collect_device_rows,
                      header_extra=extra)
    session.run(trace_inputs(trace))
    return session
