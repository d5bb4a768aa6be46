"""Trust in visual tracking, modeled as a Beta posterior over marker events.

Each tick the two fiducials (keydot on the tool, ChArUco on the phantom)
report visible or not. Any visible marker counts as a success; both absent
counts as a failure. Successes grow alpha by w1, failures grow beta by w0,
and the confidence lambda is the posterior mean alpha / (alpha + beta),
optionally capped so the human always retains some authority.

A sliding window keeps only the last n outcomes relevant: expiring a sample
removes its contribution. Internally the state stores integer success and
failure counts so that the windowed posterior equals a from-scratch
recomputation over the window exactly, with no floating-point drift.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class VisibilitySample:
    kd_visible: bool
    ch_visible: bool
    timestamp: float = 0.0


@dataclass(frozen=True)
class PerformanceSample:
    """Binary tracking outcome: 1 when at least one marker was seen."""

    p: int

    def __post_init__(self):
        if self.p not in (0, 1):
            raise ValueError(f"performance must be 0 or 1, got {self.p}")


def classify_performance(v: VisibilitySample) -> PerformanceSample:
    """OR rule over the two markers."""
    return PerformanceSample(1 if (v.kd_visible or v.ch_visible) else 0)


@dataclass(frozen=True)
class ConfidenceState:
    """Beta posterior over tracking reliability.

    alpha0/beta0 are the prior; n_success/n_failure count the currently
    contributing outcomes. lambda_cap bounds the confidence handed to the
    controller (cap 1.0 disables it).
    """

    alpha0: float = 1.0
    beta0: float = 1.0
    w1: float = 1.0
    w0: float = 3.0
    lambda_cap: float = 0.8
    n_success: int = 0
    n_failure: int = 0

    def __post_init__(self):
        if self.alpha0 <= 0 or self.beta0 <= 0:
            raise ValueError("prior shape parameters must be positive")
        if self.w1 <= 0 or self.w0 <= 0:
            raise ValueError("gains must be positive")
        if not (0.0 < self.lambda_cap <= 1.0):
            raise ValueError("lambda cap must lie in (0, 1]")
        if self.n_success < 0 or self.n_failure < 0:
            raise ValueError("outcome counts cannot be negative")

    @property
    def alpha(self) -> float:
        return self.alpha0 + self.n_success * self.w1

    @property
    def beta(self) -> float:
        return self.beta0 + self.n_failure * self.w0

    @property
    def lam(self) -> float:
        return lambda_of(self)


def update(state: ConfidenceState, p: PerformanceSample) -> ConfidenceState:
    """Accumulate one outcome: success bumps alpha by w1, failure bumps beta by w0."""
    if p.p == 1:
        return replace(state, n_success=state.n_success + 1)
    return replace(state, n_failure=state.n_failure + 1)


def decay_window(state: ConfidenceState, p_old: PerformanceSample) -> ConfidenceState:
    """Remove the contribution of the oldest buffered outcome."""
    if p_old.p == 1:
        if state.n_success == 0:
            raise ValueError("no success contribution left to expire")
        return replace(state, n_success=state.n_success - 1)
    if state.n_failure == 0:
        raise ValueError("no failure contribution left to expire")
    return replace(state, n_failure=state.n_failure - 1)


def lambda_of(state: ConfidenceState, cap: bool = True) -> float:
    """Posterior mean, clamped to [0, lambda_cap] when cap is requested."""
    lam = state.alpha / (state.alpha + state.beta)
    if cap:
        lam = min(lam, state.lambda_cap)
    return max(0.0, min(1.0, lam))


class ConfidenceEngine:
    """Streaming wrapper: windowed Beta trust over visibility samples.

    One engine per manipulator session, single writer. `step` returns the
    capped lambda for the tick. The hot path keeps plain integer counters;
    the arithmetic is identical to update/decay_window/lambda_of, which the
    oracle tests hold it to.
    """

    def __init__(self, alpha0: float = 1.0, beta0: float = 1.0, w1: float = 1.0,
                 w0: float = 3.0, window_n: int = 100, lambda_cap: float = 0.8):
        if window_n < 1:
            raise ValueError("window length must be at least 1")
        # validate parameters once through the state type
        ConfidenceState(alpha0=alpha0, beta0=beta0, w1=w1, w0=w0,
                        lambda_cap=lambda_cap)
        self.alpha0, self.beta0, self.w1, self.w0 = alpha0, beta0, w1, w0
        self.lambda_cap = lambda_cap
        self.n_success = 0
        self.n_failure = 0
        self.window: deque[int] = deque()
        self.window_n = window_n

    def step(self, v: VisibilitySample) -> float:
        p = 1 if (v.kd_visible or v.ch_visible) else 0
        if p:
            self.n_success += 1
        else:
            self.n_failure += 1
        self.window.append(p)
        if len(self.window) > self.window_n:
            if self.window.popleft():
                self.n_success -= 1
            else:
                self.n_failure -= 1
        return self.lam

    @property
    def state(self) -> ConfidenceState:
        return ConfidenceState(alpha0=self.alpha0, beta0=self.beta0, w1=self.w1,
                               w0=self.w0, lambda_cap=self.lambda_cap,
                               n_success=self.n_success, n_failure=self.n_failure)

    @property
    def lam(self) -> float:
        alpha = self.alpha0 + self.n_success * self.w1
        beta = self.beta0 + self.n_failure * self.w0
        lam = alpha / (alpha + beta)
        if lam > self.lambda_cap:
            lam = self.lambda_cap
        return lam if lam > 0.0 else 0.0
