"""Command-line entry points: synth, train, eval, explain, serve.

One JSON config file per run, with sections "synth", "model", "train" and
"data"; command-line flags override config fields. Outputs are written
atomically (temp file + rename) and any domain error exits with code 1 and
a message on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

from .checkpoint import load_model, save_model
from .data import (
    Normalizer,
    SynthConfig,
    VariableSchema,
    load_csv,
    make_windows,
    synth_generate,
    write_csv,
)
from .errors import ProtocastError
from .evaluation import activation_report, evaluate, explain
from .model import ModelConfig, build_model, seed_prototypes_from_data
from .service import SteeringSession, serve
from .trainer import TrainConfig, WindowSet, staged_train


def _write_json(path, payload) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


def _write_atomic(path, writer) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _require(path: str, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise ProtocastError(f"{what} not found: {p}")
    return p


def _prepare(args, config: dict):
    """Shared data pipeline: schema, raw bundle, stride (no normalization yet)."""
    schema = VariableSchema.load(_require(args.schema, "schema file"))
    data_cfg = config.get("data", {})
    fractions = tuple(data_cfg.get("split_fractions", (0.7, 0.1, 0.2)))
    bundle = load_csv(_require(args.data, "data file"), schema, split_fractions=fractions)
    bundle.validate_vocab(schema)
    stride = int(data_cfg.get("stride", 1))
    return schema, bundle, stride


def cmd_synth(args) -> int:
    config = _load_config(args.config)
    synth_cfg = SynthConfig.from_dict(config.get("synth", {}))
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    bundle, schema, labels = synth_generate(synth_cfg, seed)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_atomic(out / "data.csv", lambda tmp: write_csv(bundle, schema, tmp))
    schema.save(out / "schema.json")
    _write_json(out / "labels.json", {"seed": seed, "regime": [int(v) for v in labels]})
    print(f"wrote {out / 'data.csv'}, {out / 'schema.json'}, {out / 'labels.json'}")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args.config)
    schema, bundle, stride = _prepare(args, config)
    normalizer = Normalizer.fit(bundle, schema)
    normalized = normalizer.apply(bundle)
    windows = WindowSet(
        train=make_windows(normalized, schema, stride=stride, split="train"),
        val=make_windows(normalized, schema, stride=stride, split="val"),
        test=make_windows(normalized, schema, stride=stride, split="test"),
    )

    model_cfg = ModelConfig.from_dict(config.get("model", {}))
    train_dict = dict(config.get("train", {}))
    if args.seed is not None:
        train_dict["seed"] = args.seed
    train_cfg = TrainConfig.from_dict(train_dict)

    model = build_model(schema, model_cfg, seed=train_cfg.seed, normalizer=normalizer)
    seed_prototypes_from_data(model, windows.train, seed=train_cfg.seed)
    report = staged_train(model, windows, train_cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_atomic(
        out / "checkpoint.bin",
        lambda tmp: save_model(model, tmp, train_config=train_cfg.to_dict(), seed_lineage=[train_cfg.seed]),
    )
    _write_json(out / "report.json", report.to_dict())
    final = report.stage_val_mae[-1] if report.stage_val_mae else float("nan")
    print(f"trained {len(report.epochs)} epochs over {len(report.stage_boundaries)} stage(s); "
          f"final val MAE {final:.4f}")
    print(f"wrote {out / 'checkpoint.bin'}, {out / 'report.json'}")
    return 0


def cmd_eval(args) -> int:
    config = _load_config(args.config)
    model = load_model(_require(args.checkpoint, "checkpoint"))
    schema, bundle, stride = _prepare(args, config)
    if schema != model.schema:
        raise ProtocastError("schema file does not match the checkpoint's schema")
    normalized = model.normalizer.apply(bundle) if model.normalizer else bundle
    windows = make_windows(normalized, schema, stride=stride, split=args.split)
    report = evaluate(model, windows, denormalize=args.denormalize)
    _write_json(args.out, report.to_dict())
    print(f"{args.split} MSE {report.mse:.6f}  MAE {report.mae:.6f}  ({report.count} windows)")
    return 0


def cmd_explain(args) -> int:
    config = _load_config(args.config)
    model = load_model(_require(args.checkpoint, "checkpoint"))
    schema, bundle, stride = _prepare(args, config)
    if schema != model.schema:
        raise ProtocastError("schema file does not match the checkpoint's schema")
    normalized = model.normalizer.apply(bundle) if model.normalizer else bundle
    windows = make_windows(normalized, schema, stride=stride, split=args.split)

    if args.instance is not None:
        if not 0 <= args.instance < len(windows):
            raise ProtocastError(f"instance must be in [0, {len(windows)}), got {args.instance}")
        _write_json(args.out, explain(model, windows[args.instance]).to_dict())
        print(f"wrote explanation for instance {args.instance} to {args.out}")
    else:
        timeline = activation_report(model, windows, k=args.topk)
        _write_json(args.out, timeline.to_dict())
        if args.csv:
            _write_atomic(args.csv, timeline.to_csv)
        print(f"wrote activation timeline ({len(timeline.entries)} instances) to {args.out}")
    return 0


def cmd_serve(args) -> int:
    config = _load_config(args.config)
    model = load_model(_require(args.checkpoint, "checkpoint"))
    schema, bundle, stride = _prepare(args, config)
    if schema != model.schema:
        raise ProtocastError("schema file does not match the checkpoint's schema")
    train_cfg = TrainConfig.from_dict(config.get("train", {}))
    session = SteeringSession(model, bundle, schema, train_config=train_cfg, stride=stride)
    ui_dir = str(_require(args.ui, "UI directory")) if args.ui else None
    host, _, port = args.bind.partition(":")
    print(f"serving on http://{host or '127.0.0.1'}:{port or 8760}")
    serve(session, host=host or "127.0.0.1", port=int(port or 8760), ui_dir=ui_dir)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="protocast", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True, checkpoint=False):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        if data:
            p.add_argument("--data", required=True, help="CSV data file")
            p.add_argument("--schema", required=True, help="schema JSON file")
        if checkpoint:
            p.add_argument("--checkpoint", required=True, help="model checkpoint path")

    p = sub.add_parser("synth", help="generate a planted-pattern dataset")
    common(p, data=False)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="run staged training and write a checkpoint")
    common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="compute forecast metrics for a checkpoint")
    common(p, checkpoint=True)
    p.add_argument("--out", required=True, help="metrics JSON path")
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--denormalize", action="store_true", help="report in original units")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("explain", help="write an explanation or activation timeline")
    common(p, checkpoint=True)
    p.add_argument("--out", required=True, help="output JSON path")
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--instance", type=int, default=None, help="explain this window index")
    p.add_argument("--topk", type=int, default=3, help="leaves per instance in the timeline")
    p.add_argument("--csv", default=None, help="also export the timeline as CSV")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("serve", help="launch the HTTP steering service")
    common(p, checkpoint=True)
    p.add_argument("--bind", default="127.0.0.1:8760", help="host:port")
    p.add_argument("--ui", default=None, help="also serve a built UI directory at /")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ProtocastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
