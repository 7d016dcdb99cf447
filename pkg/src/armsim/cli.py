"""Command-line entry points: live serving, headless simulation, log
replay and aggregation, and the gesture classifier utilities."""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

import numpy as np


def _load_config(path):
    from .session import SessionConfig

    if not path:
        return SessionConfig()
    try:
        return SessionConfig.from_file(path)
    except (ValueError, OSError, json.JSONDecodeError) as err:
        print(f"config error: {err}", file=sys.stderr)
        raise SystemExit(2)


def _cmd_serve(args):
    from .server import serve

    config = _load_config(args.config)
    if args.port is not None:
        config.bind_port = args.port
    if args.host:
        config.bind_host = args.host
    try:
        asyncio.run(serve(config, log_dir=args.log_dir))
    except KeyboardInterrupt:
        pass
    return 0


def _cmd_simulate(args):
    from .session import run_session

    config = _load_config(args.config)
    paths = run_session(config, trace_path=args.trace, log_dir=args.log_dir)
    for p in paths:
        print(p)
    return 0


def _cmd_replay(args):
    from . import metrics
    from .kinematics import ArmGeometry

    records = metrics.read_log(args.log)
    table = metrics.transfer_metrics(records)
    outcomes = {
        r.payload["block"]: r.payload["outcome"]
        for r in records if r.kind == "outcome"
    }
    summary = {"blocks": {}, "method": metrics.trial_method(records)}
    print(f"{'Block':<7}{'Outcome':<24}{'Pick s':>8}{'Place s':>9}{'MinDist m':>11}"
          f"{'UsedPick':>10}{'UsedPlace':>10}")
    for bid, tm in table.items():
        fmt = lambda v, spec: ("-" if v is None else format(v, spec))
        print(f"{bid:<7}{outcomes.get(bid, '-'):<24}{fmt(tm.pick_duration, '.2f'):>8}"
              f"{fmt(tm.place_duration, '.2f'):>9}{fmt(tm.min_target_distance, '.4f'):>11}"
              f"{str(tm.used_method_pick):>10}{str(tm.used_method_place):>10}")
        summary["blocks"][bid] = {
            "outcome": outcomes.get(bid),
            "pick_duration": tm.pick_duration,
            "place_duration": tm.place_duration,
            "min_target_distance": tm.min_target_distance,
            "used_method_pick": tm.used_method_pick,
            "used_method_place": tm.used_method_place,
        }
    positions, rotations = metrics.resample_shoulder(records)
    comp = metrics.compensatory_motion(positions, rotations)
    print(f"compensation: translation {comp.translation:.4f} m, rotation {comp.rotation:.4f} rad-sum")
    summary["compensation"] = {"translation": comp.translation, "rotation": comp.rotation}
    t0 = records[0].t if records else 0.0
    t1 = records[-1].t if records else 0.0
    attention = metrics.gaze_attention(records, t0, t1, ArmGeometry())
    print(f"gaze attention: arm {attention.arm:.2f}, hand {attention.hand:.2f}, "
          f"targets {attention.targets:.2f}, other {attention.other:.2f}")
    summary["gaze_attention"] = attention.__dict__
    if args.json:
        Path(args.json).write_text(json.dumps(summary, indent=2))
    return 0


def _cmd_aggregate(args):
    from . import metrics

    rows = []
    for path in sorted(Path(args.logs).glob("*.ndjson")):
        records = metrics.read_log(path)
        method = metrics.trial_method(records)
        if method is None:
            continue
        rows.append({"method": method, "successes": metrics.success_count(records)})
    if not rows:
        print("no trial logs found", file=sys.stderr)
        return 1
    agg = metrics.aggregate_success(rows)
    print(metrics.format_aggregate(agg))
    if args.json:
        Path(args.json).write_text(json.dumps(agg, indent=2))
    return 0


def _split_holdout(features, labels, fraction, seed):
    rng = np.random.default_rng(seed)
    index = rng.permutation(len(features))
    cut = int(len(features) * (1.0 - fraction))
    return (features[index[:cut]], labels[index[:cut]],
            features[index[cut:]], labels[index[cut:]])


def _cmd_emg_train(args):
    from . import emg

    if args.synthetic or not args.data:
        buffer, segments = emg.synthetic_recording(seed=args.seed)
        print(f"synthetic recording: {buffer.channels} channels, {buffer.length} samples")
    else:
        buffer, segments = emg.load_recording(args.data)
    if not segments:
        print("recording has no labeled segments; cannot train", file=sys.stderr)
        return 1
    features, labels = emg.features_from_segments(buffer, segments)
    train_x, train_y, hold_x, hold_y = _split_holdout(features, labels, args.holdout, args.seed)
    model = emg.train_lda(train_x, train_y)
    correct = sum(
        int(emg.classify(model, f)[0]) == int(lab) for f, lab in zip(hold_x, hold_y)
    )
    accuracy = correct / max(len(hold_y), 1)
    print(f"trained on {len(train_y)} windows; holdout accuracy {accuracy:.3f} ({len(hold_y)} windows)")
    if args.model:
        emg.save_model(args.model, model)
        print(f"model saved to {args.model}")
    return 0


def _cmd_emg_eval(args):
    from . import emg

    model = emg.load_model(args.model)
    buffer, segments = emg.load_recording(args.data)
    if not segments:
        print("recording has no labeled segments; nothing to score", file=sys.stderr)
        return 1
    features, labels = emg.features_from_segments(buffer, segments)
    confusion = np.zeros((len(emg.GestureClass), len(emg.GestureClass)), dtype=int)
    for f, lab in zip(features, labels):
        pred, _ = emg.classify(model, f)
        confusion[int(lab), int(pred)] += 1
    accuracy = np.trace(confusion) / max(confusion.sum(), 1)
    print(f"accuracy {accuracy:.3f} over {confusion.sum()} windows")
    names = emg.GESTURE_NAMES
    print("      " + "".join(f"{n:>6}" for n in names))
    for i, row in enumerate(confusion):
        print(f"{names[i]:>6}" + "".join(f"{v:>6}" for v in row))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="armsim",
        description="Desk-scale simulator of an intelligent whole-arm prosthesis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the live WebSocket session")
    p.add_argument("--config", help="session configuration JSON")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--log-dir", default=None)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("simulate", help="run trials headless from a trace")
    p.add_argument("--config", help="session configuration JSON")
    p.add_argument("--trace", help="ndjson trace of timed input events")
    p.add_argument("--log-dir", default="logs")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("replay", help="derive metrics from a trial log")
    p.add_argument("--log", required=True)
    p.add_argument("--json", help="also write a machine-readable summary here")
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("aggregate", help="aggregate success counts over a log directory")
    p.add_argument("--logs", required=True)
    p.add_argument("--json", help="also write a machine-readable summary here")
    p.set_defaults(func=_cmd_aggregate)

    p = sub.add_parser("emg-train", help="train the gesture classifier")
    p.add_argument("--data", help="labeled recording (.emg)")
    p.add_argument("--synthetic", action="store_true", help="train on the synthetic source")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--holdout", type=float, default=0.25)
    p.add_argument("--model", help="write the trained model here (.npz)")
    p.set_defaults(func=_cmd_emg_train)

    p = sub.add_parser("emg-eval", help="evaluate a trained classifier on a recording")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.set_defaults(func=_cmd_emg_eval)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
