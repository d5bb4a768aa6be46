"""Experiments, metrics and dataset generation.

Every metric is computed from the event log alone, so replaying a stored log
reproduces the report bit for bit. Comparative studies run the traditional
and assisted pipelines on byte-identical operator scripts (paired design) and
score the direction of the effect with a one-sided sign test across seeds.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import binomtest

from .gestures import GestureClass, LabelStrategy, RawGestureLabel
from .model import TrainConfig, TrainedModel, kfold_evaluate, train
from .operator import OperatorProfile, build_reaching_trace, build_suturing_trace
from .session import CIAC, TRADITIONAL, run_scripted
from .sim import SimConfig, SimEventLog, canonical_json
from .stream import (
    extract_windows,
    load_recording,
    recording_row,
    save_recording,
)

SPAN_KINDS = ("reach", "positioning", "push", "pull", "handoff")


# --- metrics -------------------------------------------------------------------


@dataclass
class MetricsReport:
    """Per-run metrics; everything derives from one event log."""

    mode: str
    task: str
    seed: int
    spans: list
    per_entry_s: dict
    per_surgeme_mean_s: dict
    per_throw_s: list
    avg_throw_s: float | None
    total_s: float
    push_perp_mean_deg: float | None
    realtime_accuracy: float | None
    n_ticks: int

    def to_dict(self) -> dict:
        return {
            "mode": self.mode, "task": self.task, "seed": self.seed,
            "spans": self.spans, "per_entry_s": self.per_entry_s,
            "per_surgeme_mean_s": self.per_surgeme_mean_s,
            "per_throw_s": self.per_throw_s, "avg_throw_s": self.avg_throw_s,
            "total_s": self.total_s,
            "push_perp_mean_deg": self.push_perp_mean_deg,
            "realtime_accuracy": self.realtime_accuracy, "n_ticks": self.n_ticks,
        }

    def canonical(self) -> str:
        return canonical_json(self.to_dict())


def _span_completion(log: SimEventLog, span: dict, dt: float):
    """First tick inside the span satisfying the span's goal predicate."""
    point = np.asarray(span["point_task"])
    key = "psm1_pos_task" if span["device"] == "psm1" else "psm2_pos_task"
    perp_max = span.get("perp_max_deg")
    for rec in log.records[span["start_tick"]:span["end_tick"]]:
        pos = np.asarray(rec[key])
        if np.linalg.norm(pos - point) < span["tol"]:
            if perp_max is None or rec["psm1_perp_deg"] < perp_max:
                return (rec["tick"] - span["start_tick"] + 1) * dt, False
    return (span["end_tick"] - span["start_tick"]) * dt, True


def compute_metrics(log: SimEventLog, task: str | None = None) -> MetricsReport:
    header = log.header
    dt = header["config"]["dt"]
    spans = header.get("metric_spans", [])
    if task is None:
        task = "reach" if any(s["kind"] == "reach" for s in spans) else "suture"

    scored = []
    for span in spans:
        duration, censored = _span_completion(log, span, dt)
        scored.append({
            "kind": span["kind"], "throw": span["throw"],
            "entry_index": span["entry_index"],
            "duration_s": duration, "censored": censored,
        })

    per_entry = {}
    for s in scored:
        if s["kind"] == "reach":
            per_entry[str(s["entry_index"])] = s["duration_s"]

    per_surgeme: dict = {}
    for kind in ("positioning", "push", "pull", "handoff"):
        vals = [s["duration_s"] for s in scored if s["kind"] == kind]
        if vals:
            per_surgeme[kind] = float(np.mean(vals))

    throws = sorted({s["throw"] for s in scored if s["kind"] != "reach"})
    per_throw = [float(sum(s["duration_s"] for s in scored if s["throw"] == t
                           and s["kind"] != "reach")) for t in throws]

    push_ticks = []
    for span in spans:
        if span["kind"] == "push":
            push_ticks.extend(
                rec["psm1_perp_deg"]
                for rec in log.records[span["start_tick"]:span["end_tick"]])
    push_perp = float(np.mean(push_ticks)) if push_ticks else None

    scored_ticks = [(rec["emitted_class"], rec["true_class"])
                    for rec in log.records
                    if rec["emitted_class"] is not None and rec["true_class"] is not None]
    accuracy = (float(np.mean([e == t for e, t in scored_ticks]))
                if scored_ticks else None)

    total = float(sum(s["duration_s"] for s in scored))
    return MetricsReport(
        mode=header["mode"], task=task, seed=header.get("seed", 0),
        spans=scored, per_entry_s=per_entry, per_surgeme_mean_s=per_surgeme,
        per_throw_s=per_throw,
        avg_throw_s=float(np.mean(per_throw)) if per_throw else None,
        total_s=total, push_perp_mean_deg=push_perp,
        realtime_accuracy=accuracy, n_ticks=len(log.records),
    )


def replay(path) -> MetricsReport:
    """Recompute the metrics report from a stored event log."""
    return compute_metrics(SimEventLog.load(path))


# --- report emission --------------------------------------------------------


def emit_report(metrics: MetricsReport, fmt: str = "json", path=None) -> str:
    """Serialize a report; stable column order for csv, canonical json."""
    if fmt == "json":
        text = metrics.canonical()
    elif fmt == "csv":
        d = metrics.to_dict()
        cols = ["mode", "task", "seed", "total_s", "avg_throw_s",
                "push_perp_mean_deg", "realtime_accuracy", "n_ticks"]
        for k in sorted(d["per_entry_s"]):
            cols.append(f"entry_{k}_s")
        lines = [",".join(cols)]
        row = []
        for c in cols:
            if c.startswith("entry_"):
                row.append(repr(d["per_entry_s"][c[6:-2]]))
            else:
                v = d[c]
                row.append("" if v is None else (repr(v) if isinstance(v, float) else str(v)))
        lines.append(",".join(row))
        text = "\n".join(lines) + "\n"
    elif fmt == "table":
        d = metrics.to_dict()
        rows = [("mode", d["mode"]), ("task", d["task"]), ("seed", d["seed"]),
                ("total [s]", f"{d['total_s']:.2f}")]
        if d["avg_throw_s"] is not None:
            rows.append(("avg throw [s]", f"{d['avg_throw_s']:.2f}"))
        for kind, v in d["per_surgeme_mean_s"].items():
            rows.append((f"avg {kind} [s]", f"{v:.2f}"))
        for k, v in sorted(d["per_entry_s"].items()):
            rows.append((f"entry {k} [s]", f"{v:.2f}"))
        if d["push_perp_mean_deg"] is not None:
            rows.append(("avg perp err in push [deg]", f"{d['push_perp_mean_deg']:.2f}"))
        if d["realtime_accuracy"] is not None:
            rows.append(("real-time accuracy", f"{d['realtime_accuracy']:.3f}"))
        width = max(len(r[0]) for r in rows)
        text = "\n".join(f"{name.ljust(width)}  {val}" for name, val in rows) + "\n"
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    if path is not None:
        with open(path, "w") as f:
            f.write(text)
    return text


# --- experiment specs and paired studies -------------------------------------


@dataclass(frozen=True)
class ExperimentSpec:
    task: str = "reach"                      # reach | suture
    seeds: tuple = tuple(range(20))
    lambda_source: str = "ramp"              # ramp | bayes
    sim: SimConfig = field(default_factory=SimConfig)
    profile: OperatorProfile = field(default_factory=OperatorProfile)
    model: TrainedModel | None = None
    use_true_labels: bool = False
    throws: int = 4

    def __post_init__(self):
        if self.task not in ("reach", "suture"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.lambda_source == "ramp" and self.sim.lambda_cap != 0.8:
            raise ValueError("the linear ramp protocol caps confidence at 0.8")


@dataclass
class PairedStudy:
    task: str
    seeds: list
    traditional: list           # MetricsReport per seed
    ciac: list
    wins: int
    ties: int
    p_value: float

    def summary(self) -> dict:
        def agg(reports, key):
            vals = [getattr(r, key) for r in reports if getattr(r, key) is not None]
            if not vals:
                return None
            return {"mean": float(np.mean(vals)), "std": float(np.std(vals))}

        out = {
            "task": self.task, "n_seeds": len(self.seeds),
            "wins": self.wins, "ties": self.ties, "sign_test_p": self.p_value,
            "traditional_total_s": agg(self.traditional, "total_s"),
            "ciac_total_s": agg(self.ciac, "total_s"),
        }
        if self.task == "suture":
            out["traditional_push_perp_deg"] = agg(self.traditional, "push_perp_mean_deg")
            out["ciac_push_perp_deg"] = agg(self.ciac, "push_perp_mean_deg")
            out["ciac_realtime_accuracy"] = agg(self.ciac, "realtime_accuracy")
            out["traditional_avg_throw_s"] = agg(self.traditional, "avg_throw_s")
            out["ciac_avg_throw_s"] = agg(self.ciac, "avg_throw_s")
        return out


def sign_test(trad_values, ciac_values) -> tuple[int, int, float]:
    """One-sided sign test that the assisted values are smaller. Ties drop."""
    wins = sum(t > c for t, c in zip(trad_values, ciac_values))
    ties = sum(t == c for t, c in zip(trad_values, ciac_values))
    n = len(trad_values) - ties
    if n == 0:
        return wins, ties, 1.0
    return wins, ties, float(binomtest(wins, n, 0.5, alternative="greater").pvalue)


def _paired_runs(spec: ExperimentSpec, seed: int, log_hook=None):
    sim = replace(spec.sim, seed=seed)
    if spec.task == "reach":
        trace = build_reaching_trace(sim, spec.profile, seed=seed)
        override = GestureClass.PUSH      # the reach protocol's fixed paradigm
    else:
        trace = build_suturing_trace(sim, spec.profile, seed=seed, throws=spec.throws)
        override = None
    trad = run_scripted(trace, sim, TRADITIONAL)
    ciac = run_scripted(trace, sim, CIAC, lambda_source=spec.lambda_source,
                        model=spec.model, use_true_labels=spec.use_true_labels,
                        paradigm_override=override)
    if log_hook is not None:
        log_hook(seed, trad.log, ciac.log)
    return compute_metrics(trad.log, spec.task), compute_metrics(ciac.log, spec.task)


def run_target_reaching(spec: ExperimentSpec, log_hook=None) -> PairedStudy:
    """Paired reach study: same operator script, both pipelines, sign test on
    total completion time."""
    trad_reports, ciac_reports = [], []
    for seed in spec.seeds:
        t, c = _paired_runs(replace(spec, task="reach"), seed, log_hook)
        trad_reports.append(t)
        ciac_reports.append(c)
    wins, ties, p = sign_test([r.total_s for r in trad_reports],
                              [r.total_s for r in ciac_reports])
    return PairedStudy("reach", list(spec.seeds), trad_reports, ciac_reports,
                       wins, ties, p)


def run_suturing(spec: ExperimentSpec, log_hook=None) -> PairedStudy:
    """Paired four-throw suturing study; sign test on mean push
    perpendicularity error."""
    trad_reports, ciac_reports = [], []
    for seed in spec.seeds:
        t, c = _paired_runs(replace(spec, task="suture"), seed, log_hook)
        trad_reports.append(t)
        ciac_reports.append(c)
    wins, ties, p = sign_test([r.push_perp_mean_deg for r in trad_reports],
                              [r.push_perp_mean_deg for r in ciac_reports])
    return PairedStudy("suture", list(spec.seeds), trad_reports, ciac_reports,
                       wins, ties, p)


# --- dataset generation -------------------------------------------------------


def gen_dataset(out_dir, recordings: int = 10, throws: int = 4, seed: int = 0,
                profile: OperatorProfile | None = None,
                sim: SimConfig | None = None) -> list:
    """Write synthetic suturing recordings in the 77-column format.

    Recordings are captured from traditional teleoperation runs (the
    classifier must not depend on its own assistance) and labeled with the
    operator script's raw gestures, so label runs match the script exactly.
    """
    if throws < 1:
        raise ValueError("need at least one throw per recording")
    profile = profile or OperatorProfile()
    sim = sim or SimConfig()
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    root = np.random.SeedSequence(seed)
    for r, child in enumerate(root.spawn(recordings)):
        rec_seed = int(child.generate_state(1)[0] % (2 ** 31))
        cfg = replace(sim, seed=rec_seed)
        trace = build_suturing_trace(cfg, profile, seed=rec_seed, throws=throws)
        session = run_scripted(trace, cfg, TRADITIONAL, collect_device_rows=True)
        rows = [recording_row(dev["psm1"], dev["psm2"], dev["sigma_r"],
                              dev["sigma_l"], RawGestureLabel.parse(dev["raw_label"]))
                for dev in session.device_rows]
        path = os.path.join(out_dir, f"recording_{r:02d}.csv")
        save_recording(path, rows)
        paths.append(path)
    return paths


def load_dataset(paths, strategy: LabelStrategy, stride: int = 5):
    """Windows, labels and recording ids across many recording files."""
    wins, labels, recs = [], [], []
    for path in paths:
        rows = load_recording(path)
        w, y = extract_windows(rows, strategy, stride=stride)
        wins.append(w)
        labels.append(y)
        recs.extend([str(path)] * len(y))
    if not wins:
        raise ValueError("no recordings given")
    return np.concatenate(wins), np.concatenate(labels), np.array(recs)


def train_on_recordings(paths, strategy: LabelStrategy = LabelStrategy.STRATEGY_2,
                        config: TrainConfig | None = None,
                        stride: int = 5) -> TrainedModel:
    windows, labels, _ = load_dataset(paths, strategy, stride)
    return train(config or TrainConfig(), windows, labels)


def kfold_on_recordings(paths, strategy: LabelStrategy,
                        config: TrainConfig | None = None, k: int = 5,
                        stride: int = 5):
    windows, labels, recs = load_dataset(paths, strategy, stride)
    return kfold_evaluate(config or TrainConfig(), windows, labels, recs, k=k)
