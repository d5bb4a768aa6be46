"""Recording files, label grouping, window extraction, streaming recognition.

A recording is a 77-column comma-delimited file sampled at 20 Hz: four
19-feature device blocks (PSM1, PSM2, SIGMA_R, SIGMA_L; position 3, rotation
matrix 9 row-major, linear velocity 3, angular velocity 3, gripper 1) and a
raw gesture label. Reads and writes round-trip bit-exactly.

The streaming classifier keeps the last 60 feature rows, smooths the class
probabilities with an exponential moving average over the last 10 outputs,
and only commits to a new class when the averaged peak clears the 0.8
threshold; otherwise it retains the previous decision.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .geometry import FEATURES_PER_DEVICE, KinematicSample
from .gestures import GestureClass, LabelStrategy, RawGestureLabel

SAMPLE_RATE_HZ = 20
WINDOW_LEN = 60
N_STREAM_FEATURES = 28
EMA_WINDOW = 10
PROB_THRESHOLD = 0.8

_DEVICE_PREFIXES = ("psm1", "psm2", "sigma_r", "sigma_l")
_FEATURE_SUFFIXES = (
    ["pos_x", "pos_y", "pos_z"]
    + [f"rot_{i}{j}" for i in range(3) for j in range(3)]
    + ["vel_x", "vel_y", "vel_z", "angvel_x", "angvel_y", "angvel_z", "gripper"]
)

COLUMN_NAMES = [f"{d}_{s}" for d in _DEVICE_PREFIXES for s in _FEATURE_SUFFIXES]
COLUMN_NAMES.append("gesture_label")

N_COLUMNS = len(COLUMN_NAMES)  # 77

# Per device block: linear velocity, angular velocity, gripper.
STREAM_COLUMNS = [d * FEATURES_PER_DEVICE + i
                  for d in range(4) for i in range(12, 19)]


@dataclass(frozen=True)
class RecordingRow:
    """One 20 Hz frame: 76 numeric features plus the raw gesture label."""

    values: np.ndarray
    label: RawGestureLabel

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (N_COLUMNS - 1,):
            raise ValueError(f"expected {N_COLUMNS - 1} numeric columns, got {v.shape}")
        object.__setattr__(self, "values", v)

    def stream_features(self) -> np.ndarray:
        return self.values[STREAM_COLUMNS]


def recording_row(psm1: KinematicSample, psm2: KinematicSample,
                  sigma_r: KinematicSample, sigma_l: KinematicSample,
                  label: RawGestureLabel) -> RecordingRow:
    values = np.concatenate([s.feature_vector()
                             for s in (psm1, psm2, sigma_r, sigma_l)])
    return RecordingRow(values, label)


def save_recording(path, rows) -> None:
    with open(path, "w") as f:
        f.write(",".join(COLUMN_NAMES) + "\n")
        for row in rows:
            cells = [repr(float(v)) for v in row.values]
            cells.append(row.label.name)
            f.write(",".join(cells) + "\n")


def load_recording(path) -> list[RecordingRow]:
    """Parse a recording file; lossless for files written by save_recording."""
    rows = []
    with open(path) as f:
        header = f.readline().rstrip("\n")
        if header and header.split(",") != COLUMN_NAMES:
            raise ValueError("unrecognized recording header")
        for i, line in enumerate(f):
            line = line.rstrip("\n")
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != N_COLUMNS:
                raise ValueError(f"row {i}: expected {N_COLUMNS} columns, got {len(cells)}")
            try:
                values = np.array([float(c) for c in cells[:-1]])
            except ValueError as exc:
                raise ValueError(f"row {i}: non-numeric kinematic field ({exc})") from None
            try:
                label = RawGestureLabel.parse(cells[-1])
            except KeyError:
                raise ValueError(f"row {i}: unknown gesture label {cells[-1]!r}") from None
            rows.append(RecordingRow(values, label))
    return rows


def apply_strategy(rows, strategy: LabelStrategy) -> list[GestureClass]:
    """Group each row's raw label into one of the five classes."""
    return [strategy.apply(row.label) for row in rows]


def extract_windows(rows, strategy: LabelStrategy, stride: int = 5,
                    window: int = WINDOW_LEN):
    """Sliding windows over one recording's streaming features.

    Returns (windows, labels) with windows of shape (n, window, 28); each
    window is labeled by its final row, the causal choice for real-time use.
    Fewer rows than one window yields empty arrays, not an error. Windows
    never cross recording boundaries because rows come from one recording.
    """
    if stride < 1:
        raise ValueError("stride must be at least 1")
    features = np.array([row.stream_features() for row in rows])
    classes = apply_strategy(rows, strategy)
    n = len(rows)
    if n < window:
        return (np.zeros((0, window, N_STREAM_FEATURES)), np.zeros(0, dtype=int))
    starts = range(0, n - window + 1, stride)
    wins = np.stack([features[s:s + window] for s in starts])
    labels = np.array([classes[s + window - 1].value for s in starts])
    return wins, labels


def ema_weights(n: int, span: int = EMA_WINDOW) -> np.ndarray:
    """Normalized exponential weights for the last n outputs, newest heaviest."""
    gamma = 2.0 / (span + 1.0)
    ages = np.arange(n - 1, -1, -1)   # buffer is oldest-first
    w = (1.0 - gamma) ** ages
    return w / w.sum()


class StreamingClassifier:
    """Real-time smoothed recognition over a live feature stream.

    One instance per operator session; mutation is single-threaded. Until the
    60-row buffer fills, the emitted class stays Other: no prediction is
    defensible without a full window.
    """

    def __init__(self, predict_proba, window: int = WINDOW_LEN,
                 ema_window: int = EMA_WINDOW, threshold: float = PROB_THRESHOLD,
                 n_features: int = N_STREAM_FEATURES):
        self.predict_proba = predict_proba
        self.window = window
        self.ema_window = ema_window
        self.threshold = threshold
        self.n_features = n_features
        self.rows: deque = deque(maxlen=window)
        self.probs: deque = deque(maxlen=ema_window)
        self.emitted = GestureClass.OTHER

    def step(self, features) -> tuple[GestureClass, np.ndarray | None]:
        """Consume one feature row; return (emitted class, averaged probs)."""
        features = np.asarray(features, dtype=float)
        if features.shape != (self.n_features,):
            raise ValueError(f"expected {self.n_features} features, got {features.shape}")
        self.rows.append(features)
        if len(self.rows) < self.window:
            return self.emitted, None
        raw = np.asarray(self.predict_proba(np.array(self.rows)), dtype=float)
        self.probs.append(raw)
        avg = self.averaged()
        if float(avg.max()) >= self.threshold:
            self.emitted = GestureClass.from_code(int(avg.argmax()))
        return self.emitted, avg

    def averaged(self) -> np.ndarray:
        w = ema_weights(len(self.probs), self.ema_window)
        return np.einsum("i,ij->j", w, np.array(self.probs))
