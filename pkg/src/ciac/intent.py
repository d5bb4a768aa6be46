"""Recover the operator's hidden target from interaction forces.

The hand interface is modeled as a spring-damper pulling the end effector
toward the operator's target: u = -L1 (x - tau) - L2 xdot. Inverting that
relation turns each force sample into a pseudo-measurement of tau, and a
random-walk Kalman filter per Cartesian axis smooths the stream into the
intent estimate used by the blending controller.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import as_vec3


def _check_psd(m: np.ndarray, name: str) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError(f"{name} must be 3x3")
    if np.abs(m - m.T).max() > 1e-9:
        raise ValueError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(m).min() < -1e-12:
        raise ValueError(f"{name} must be positive semi-definite")
    return m


@dataclass(frozen=True)
class ImpedanceParams:
    """Stiffness (N/m) and viscosity (N s/m) of the hand interaction model."""

    l1: np.ndarray
    l2: np.ndarray

    def __post_init__(self):
        l1 = _check_psd(self.l1, "stiffness L1")
        l2 = _check_psd(self.l2, "viscosity L2")
        if np.linalg.eigvalsh(l1).min() <= 0:
            raise ValueError("stiffness L1 must be positive definite (invertible)")
        object.__setattr__(self, "l1", l1)
        object.__setattr__(self, "l2", l2)
        object.__setattr__(self, "_l1_inv", np.linalg.inv(l1))

    @staticmethod
    def default() -> "ImpedanceParams":
        # Typical teleoperation hand impedance.
        return ImpedanceParams(np.eye(3) * 120.0, np.eye(3) * 15.0)

    def force_for_target(self, x, xdot, target) -> np.ndarray:
        """Forward model: the force a hand at (x, xdot) exerts toward target."""
        return -self.l1 @ (as_vec3(x) - as_vec3(target)) - self.l2 @ as_vec3(xdot)


def pseudo_measurement(u_h, x, xdot, imp: ImpedanceParams) -> np.ndarray:
    """Algebraic inversion of the impedance model: tau = x + L1^-1 (u + L2 xdot)."""
    return as_vec3(x) + imp._l1_inv @ (as_vec3(u_h) + imp.l2 @ as_vec3(xdot))


@dataclass(frozen=True)
class KalmanConfig:
    """Random-walk filter noise levels; initial estimate is the current position."""

    q: np.ndarray = field(default_factory=lambda: np.eye(3) * (0.002 ** 2))
    r: np.ndarray = field(default_factory=lambda: np.eye(3) * (0.005 ** 2))
    p0: np.ndarray = field(default_factory=lambda: np.eye(3) * (0.050 ** 2))

    def __post_init__(self):
        object.__setattr__(self, "q", _check_psd(self.q, "process noise Q"))
        object.__setattr__(self, "r", _check_psd(self.r, "measurement noise R"))
        object.__setattr__(self, "p0", _check_psd(self.p0, "initial covariance P0"))


@dataclass(frozen=True)
class IntentEstimate:
    """Posterior over the operator's target position."""

    tau_h_hat: np.ndarray
    covariance: np.ndarray
    innovation: np.ndarray
    timestamp: float
    skipped: bool = False

    def __post_init__(self):
        object.__setattr__(self, "tau_h_hat", as_vec3(self.tau_h_hat))
        object.__setattr__(self, "innovation", as_vec3(self.innovation))
        object.__setattr__(self, "covariance",
                           _check_psd(self.covariance, "estimate covariance"))


def initial_estimate(x0, cfg: KalmanConfig, timestamp: float = 0.0) -> IntentEstimate:
    return IntentEstimate(as_vec3(x0), cfg.p0, np.zeros(3), timestamp)


def kf_step(state: IntentEstimate, measurement, cfg: KalmanConfig,
            timestamp: float | None = None) -> IntentEstimate:
    """One predict + update cycle of the random-walk filter.

    A non-finite measurement is skipped: the covariance inflates by Q and the
    returned estimate is flagged, leaving the mean untouched.
    """
    ts = state.timestamp if timestamp is None else timestamp
    p_pred = state.covariance + cfg.q
    z = np.asarray(measurement, dtype=float)
    if z.shape != (3,) or not np.all(np.isfinite(z)):
        return IntentEstimate(state.tau_h_hat, _symmetrize(p_pred), np.zeros(3),
                              ts, skipped=True)
    innovation = z - state.tau_h_hat
    s = p_pred + cfg.r
    k = p_pred @ np.linalg.inv(s)
    x = state.tau_h_hat + k @ innovation
    # Joseph form keeps the covariance symmetric PSD.
    ik = np.eye(3) - k
    p = ik @ p_pred @ ik.T + k @ cfg.r @ k.T
    return IntentEstimate(x, _symmetrize(p), innovation, ts)


def _symmetrize(p: np.ndarray) -> np.ndarray:
    return (p + p.T) * 0.5


class IntentEstimator:
    """Streaming composition: force sample in, intent estimate out.

    One estimator per manipulator; mutation is confined to the owning control
    loop and each returned estimate is an immutable snapshot.
    """

    def __init__(self, imp: ImpedanceParams | None = None,
                 cfg: KalmanConfig | None = None):
        self.imp = imp if imp is not None else ImpedanceParams.default()
        self.cfg = cfg if cfg is not None else KalmanConfig()
        self.state: IntentEstimate | None = None

    def step(self, u_h, x, xdot, timestamp: float = 0.0) -> IntentEstimate:
        if self.state is None:
            self.state = initial_estimate(x, self.cfg, timestamp)
        z = pseudo_measurement(u_h, x, xdot, self.imp)
        self.state = kf_step(self.state, z, self.cfg, timestamp)
        return self.state


def estimate_intent(samples, imp: ImpedanceParams | None = None,
                    cfg: KalmanConfig | None = None) -> list[IntentEstimate]:
    """Run the estimator over an iterable of (u_h, x, xdot, timestamp)."""
    est = IntentEstimator(imp, cfg)
    out = []
    last_ts = None
    for u_h, x, xdot, ts in samples:
        if last_ts is not None and ts <= last_ts:
            raise ValueError("timestamps must be strictly increasing")
        last_ts = ts
        out.append(est.step(u_h, x, xdot, ts))
    return out
