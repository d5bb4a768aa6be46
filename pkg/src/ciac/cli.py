"""Command-line front end.

Subcommands: gen-data, train, eval, reach, suture, replay, serve. A TOML
config file can set any flag's default (flags win). Every experiment run
writes the effective config and seeds next to its outputs, so results are
reproducible from the output directory alone.

Exit code 0 on success; on failure a machine-readable JSON error goes to
stderr and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .gestures import LabelStrategy
from .harness import (
    ExperimentSpec,
    emit_report,
    gen_dataset,
    kfold_on_recordings,
    load_dataset,
    replay,
    run_suturing,
    run_target_reaching,
    train_on_recordings,
)
from .model import (
    TrainConfig,
    accuracy_from_confusion,
    load_model,
    save_model,
)
from .sim import SimConfig


def _strategy(n: int) -> LabelStrategy:
    return LabelStrategy.STRATEGY_1 if n == 1 else LabelStrategy.STRATEGY_2


def _recording_paths(data_dir: str) -> list:
    paths = sorted(
        os.path.join(data_dir, f) for f in os.listdir(data_dir) if f.endswith(".csv"))
    if not paths:
        raise FileNotFoundError(f"no recordings (*.csv) in {data_dir}")
    return paths


def _write_run_config(out_dir: str, args: argparse.Namespace) -> None:
    os.makedirs(out_dir, exist_ok=True)
    payload = {k: v for k, v in vars(args).items() if k != "func"}
    with open(os.path.join(out_dir, "run_config.json"), "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=str)


def cmd_gen_data(args) -> int:
    paths = gen_dataset(args.out, recordings=args.recordings, throws=args.throws,
                        seed=args.seed)
    _write_run_config(args.out, args)
    print(f"wrote {len(paths)} recordings to {args.out}")
    return 0


def _train_config(args) -> TrainConfig:
    return TrainConfig(learning_rate=args.lr, batch_size=args.batch_size,
                       epochs=args.epochs, seed=args.seed, dropout=args.dropout,
                       d_model=args.d_model, n_heads=args.heads)


def cmd_train(args) -> int:
    paths = _recording_paths(args.data)
    model = train_on_recordings(paths, _strategy(args.strategy),
                                config=_train_config(args), stride=args.stride)
    save_model(args.out, model)
    _write_run_config(os.path.dirname(os.path.abspath(args.out)) or ".", args)
    last = model.history[-1] if model.history else None
    if last:
        print(f"trained {args.epochs} epochs; final loss {last.loss:.4f} "
              f"train accuracy {last.accuracy:.3f}")
    print(f"checkpoint written to {args.out}")
    return 0


def cmd_eval(args) -> int:
    paths = _recording_paths(args.data)
    strategy = _strategy(args.strategy)
    if args.kfold:
        per_fold, agg = kfold_on_recordings(paths, strategy,
                                            config=_train_config(args),
                                            k=args.kfold, stride=args.stride)
        acc = accuracy_from_confusion(agg)
        print(f"{args.kfold}-fold recording-level accuracy: {acc:.4f}")
        print("aggregate confusion (rows true, cols predicted):")
        print(np.array2string(agg))
    else:
        model = load_model(args.model)
        windows, labels, _ = load_dataset(paths, strategy, stride=args.stride)
        preds = model.predict(windows)
        conf = np.zeros((5, 5), dtype=int)
        for t, p in zip(labels, preds):
            conf[t, p] += 1
        print(f"frame-wise accuracy: {accuracy_from_confusion(conf):.4f}")
        print(np.array2string(conf))
    return 0


def _sim_from_args(args) -> SimConfig:
    kw = {"seed": args.seed}
    if getattr(args, "occlusion_rate", None) is not None:
        kw["occlusion_rate"] = args.occlusion_rate
    if getattr(args, "delay_ticks", None) is not None:
        kw["delay_ticks"] = args.delay_ticks
    return SimConfig(**kw)


def _study_outputs(study, out_dir, logs):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "summary.json"), "w") as f:
        json.dump(study.summary(), f, indent=2, sort_keys=True)
    for seed, trad_log, ciac_log in logs:
        trad_log.dump(os.path.join(out_dir, f"seed{seed:03d}_traditional.log"))
        ciac_log.dump(os.path.join(out_dir, f"seed{seed:03d}_ciac.log"))
    for label, reports in (("traditional", study.traditional), ("ciac", study.ciac)):
        for rep in reports:
            emit_report(rep, "json",
                        os.path.join(out_dir, f"seed{rep.seed:03d}_{label}.json"))


def cmd_reach(args) -> int:
    logs = []
    spec = ExperimentSpec(task="reach", seeds=tuple(range(args.seeds)),
                          lambda_source=args.lambda_source, sim=_sim_from_args(args))
    study = run_target_reaching(spec, log_hook=lambda s, t, c: logs.append((s, t, c)))
    _study_outputs(study, args.out, logs)
    _write_run_config(args.out, args)
    s = study.summary()
    print(json.dumps(s, indent=2, sort_keys=True))
    print(f"assisted wins {study.wins}/{len(study.seeds)} (p = {study.p_value:.2e})")
    return 0


def cmd_suture(args) -> int:
    model = load_model(args.model) if args.model else None
    logs = []
    spec = ExperimentSpec(task="suture", seeds=tuple(range(args.seeds)),
                          lambda_source=args.lambda_source, sim=_sim_from_args(args),
                          model=model, use_true_labels=args.true_labels)
    study = run_suturing(spec, log_hook=lambda s, t, c: logs.append((s, t, c)))
    _study_outputs(study, args.out, logs)
    _write_run_config(args.out, args)
    print(json.dumps(study.summary(), indent=2, sort_keys=True))
    print(f"perpendicularity wins {study.wins}/{len(study.seeds)} "
          f"(p = {study.p_value:.2e})")
    return 0


def cmd_replay(args) -> int:
    metrics = replay(args.log)
    text = emit_report(metrics, args.format, args.out)
    print(text if args.out is None else f"report written to {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    model = load_model(args.model) if args.model else None
    app = create_app(model=model)
    print(f"teleoperation playground on ws://{args.host}:{args.port}/session")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ciac",
                                description="confidence-based shared-control workbench")
    p.add_argument("--config", help="TOML file with per-command defaults")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate synthetic suturing recordings")
    g.add_argument("--out", required=True)
    g.add_argument("--recordings", type=int, default=10)
    g.add_argument("--throws", type=int, default=4)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train the gesture classifier")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--strategy", type=int, choices=(1, 2), default=2)
    t.add_argument("--stride", type=int, default=5)
    t.add_argument("--epochs", type=int, default=8)
    t.add_argument("--batch-size", type=int, default=64)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--dropout", type=float, default=0.1)
    t.add_argument("--d-model", type=int, default=32)
    t.add_argument("--heads", type=int, default=4)
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint or run k-fold")
    e.add_argument("--data", required=True)
    e.add_argument("--model")
    e.add_argument("--kfold", type=int)
    e.add_argument("--strategy", type=int, choices=(1, 2), default=2)
    e.add_argument("--stride", type=int, default=5)
    e.add_argument("--epochs", type=int, default=8)
    e.add_argument("--batch-size", type=int, default=64)
    e.add_argument("--lr", type=float, default=1e-3)
    e.add_argument("--dropout", type=float, default=0.1)
    e.add_argument("--d-model", type=int, default=32)
    e.add_argument("--heads", type=int, default=4)
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("reach", help="paired target-reaching study")
    r.add_argument("--out", required=True)
    r.add_argument("--seeds", type=int, default=20)
    r.add_argument("--lambda-source", choices=("ramp", "bayes"), default="ramp")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--delay-ticks", type=int)
    r.set_defaults(func=cmd_reach)

    s = sub.add_parser("suture", help="paired four-throw suturing study")
    s.add_argument("--out", required=True)
    s.add_argument("--model", help="classifier checkpoint (omit for --true-labels)")
    s.add_argument("--true-labels", action="store_true",
                   help="use the script's labels instead of a classifier")
    s.add_argument("--seeds", type=int, default=20)
    s.add_argument("--lambda-source", choices=("ramp", "bayes"), default="bayes")
    s.add_argument("--occlusion-rate", type=float, default=0.1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--delay-ticks", type=int)
    s.set_defaults(func=cmd_suture)

    rp = sub.add_parser("replay", help="recompute metrics from a stored log")
    rp.add_argument("--log", required=True)
    rp.add_argument("--format", choices=("table", "json", "csv"), default="table")
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_replay)

    sv = sub.add_parser("serve", help="run the realtime teleoperation service")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8700)
    sv.add_argument("--model", help="optional classifier checkpoint")
    sv.set_defaults(func=cmd_serve)
    return p


def _apply_config_file(parser: argparse.ArgumentParser, argv: list) -> list:
    """Let a TOML file supply defaults: {command: {flag: value}}."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    path = argv[idx + 1]
    with open(path, "rb") as f:
        doc = tomllib.load(f)
    rest = argv[:idx] + argv[idx + 2:]
    command = next((a for a in rest if not a.startswith("-")), None)
    section = doc.get(command, {}) if command else {}
    extra = []
    for key, value in section.items():
        flag = f"--{key.replace('_', '-')}"
        if flag in rest:
            continue
        if isinstance(value, bool):
            if value:
                extra.append(flag)
        else:
            extra += [flag, str(value)]
    return rest + extra


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit:
        raise
    except Exception as exc:
        json.dump({"error": str(exc), "type": type(exc).__name__}, sys.stderr)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
