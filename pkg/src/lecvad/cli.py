"""``lec`` command line: synth, train, eval, infer, gradcheck, plot.

Exit codes: 0 success, 1 configuration/validation error, 2 runtime failure.
Errors are reported on stderr as one JSON object ``{"error": ..., "kind": ...}``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import torch

from . import featio, infer, pipeline, plotting
from .featio import ManifestError, SynthConfig
from .infer import InferConfig
from .trainer import CheckpointError, ConfigError, TrainConfig

log = logging.getLogger("lecvad")

PATH_KEYS = {"train_manifest": "data/train.json", "test_manifest": "data/test.json",
             "out": "run", "checkpoint": None}


class UsageError(Exception):
    pass


def _split_config(raw: dict):
    train, inf, paths = {}, {}, {}
    infer_names = {f.name for f in dataclasses.fields(InferConfig)}
    for key, value in raw.items():
        if key in PATH_KEYS:
            paths[key] = value
        elif key in InferConfig.ALIASES or key in infer_names:
            inf[InferConfig.ALIASES.get(key, key)] = value
        elif key in TrainConfig.keys():
            train[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return train, inf, paths


def resolve(args) -> dict:
    raw = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid config JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    train, inf, paths = _split_config(raw)
    flag_map = {"seed": "seed", "lam": "lam", "gamma": "gamma", "beta": "beta", "eta": "eta",
                "lr": "lr", "epochs": "epochs", "batch_size": "batch_size"}
    for attr, key in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            train[key] = value
    if getattr(args, "score_source", None):
        inf["score_source"] = args.score_source
    for key in ("out", "checkpoint"):
        if getattr(args, key, None) is not None:
            paths[key] = getattr(args, key)
    if getattr(args, "manifest", None) is not None:
        paths["train_manifest" if args.command == "train" else "test_manifest"] = args.manifest
    resolved = {k: paths.get(k, v) for k, v in PATH_KEYS.items()}
    if resolved["checkpoint"] is None:
        resolved["checkpoint"] = str(Path(resolved["out"]) / "checkpoint.lck")
    try:
        resolved["train"] = TrainConfig.from_dict(train).to_dict()
        resolved["infer"] = {k: v for k, v in dataclasses.asdict(InferConfig(**inf)).items()}
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return resolved


def _snapshot(resolved: dict, out: Path, command: str):
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{command}_config.json").write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")


def _load_model(resolved):
    from .trainer import load_checkpoint

    path = Path(resolved["checkpoint"])
    if not path.exists():
        raise UsageError(f"missing checkpoint: {path}")
    return load_checkpoint(path)


# --------------------------------------------------------------------------- commands

def cmd_synth(args):
    fields = {f.name for f in dataclasses.fields(SynthConfig)}
    raw = {}
    if args.config:
        raw = json.loads(Path(args.config).read_text())
        unknown = set(raw) - fields
        if unknown:
            raise ConfigError(f"unknown synth keys {sorted(unknown)}")
    for name in fields:
        value = getattr(args, name, None)
        if value is not None:
            raw[name] = value
    cfg = SynthConfig(**raw)
    out = Path(args.out or "data")
    seed = 0 if args.seed is None else args.seed
    _, _, files = featio.synth_dataset(cfg, seed, out)
    (out / "synth_config.json").write_text(json.dumps({"seed": seed, **dataclasses.asdict(cfg)}, indent=2) + "\n")
    print(json.dumps({"files": len(files), "out": str(out)}))


def cmd_train(args):
    from .trainer import fit, save_checkpoint

    resolved = resolve(args)
    cfg = TrainConfig.from_dict(resolved["train"])
    manifest = featio.load_manifest(resolved["train_manifest"])
    out = Path(resolved["out"])
    _snapshot(resolved, out, "train")
    state = fit(manifest, cfg)
    save_checkpoint(state, resolved["checkpoint"])
    (out / "train_log.json").write_text(json.dumps(state.log, indent=2) + "\n")
    print(json.dumps({"checkpoint": resolved["checkpoint"], "steps": state.step, "final": state.log[-1]}))


def cmd_eval(args):
    resolved = resolve(args)
    state = _load_model(resolved)
    manifest = featio.load_manifest(resolved["test_manifest"])
    out = Path(resolved["out"])
    _snapshot(resolved, out, "eval")
    report, preds = pipeline.evaluate(state.model, manifest, InferConfig(**resolved["infer"]))
    (out / "eval_report.json").write_text(report.to_json() + "\n")
    (out / "eval_table.txt").write_text(report.table() + "\n")
    print(report.table())
    print(report.to_json())


def cmd_infer(args):
    resolved = resolve(args)
    state = _load_model(resolved)
    manifest = featio.load_manifest(resolved["test_manifest"])
    out = Path(resolved["out"])
    _snapshot(resolved, out, "infer")
    cfg = InferConfig(**resolved["infer"])
    records = []
    for entry, sc in pipeline.score_manifest(state.model, manifest):
        for inst in infer.detect(sc, cfg):
            records.append(infer.detection_record(entry.video_id, inst, entry.fps, entry.snippet_len))
    path = Path(args.output) if args.output else out / "detections.jsonl"
    infer.write_detections(records, path)
    print(json.dumps({"detections": len(records), "path": str(path)}))


def cmd_gradcheck(args):
    from .trainer import grad_check

    resolved = resolve(args)
    cfg = resolved["train"]
    report = grad_check(T=args.T, d=args.d, C=args.C, m_blocks=args.m, lam=cfg["lam"], gamma=cfg["gamma"],
                        seed=cfg["seed"], beta=cfg["beta"])
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    if not report.passed:
        raise RuntimeError(f"gradient check failed for {report.failed}")


def cmd_plot(args):
    resolved = resolve(args)
    state = _load_model(resolved)
    manifest = featio.load_manifest(resolved["test_manifest"])
    try:
        entry = manifest.find(args.video)
    except KeyError:
        raise UsageError(f"unknown video {args.video!r}") from None
    out = Path(resolved["out"])
    _snapshot(resolved, out, "plot")
    seq = manifest.load_features(entry)
    scores = pipeline.score_video(state.model, seq.data)
    rows = plotting.curve_rows(scores, entry.annotation, seq.T)
    csv_path = out / f"plot_{entry.video_id}.csv"
    plotting.write_csv(rows, csv_path)
    result = {"csv": str(csv_path), "rows": len(rows)}
    if args.svg:
        svg_path = out / f"plot_{entry.video_id}.svg"
        svg_path.write_text(plotting.render_svg(rows, entry.annotation.instances, title=entry.video_id))
        result["svg"] = str(svg_path)
    print(json.dumps(result))


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "infer": cmd_infer,
            "gradcheck": cmd_gradcheck, "plot": cmd_plot}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--threads", type=int, default=1)
        if name == "synth":
            for f in dataclasses.fields(SynthConfig):
                p.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, type=type(f.default))
            continue
        p.add_argument("--checkpoint")
        p.add_argument("--manifest")
        p.add_argument("--score-source", choices=("sm", "aware"))
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--gamma", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--eta", type=float)
        p.add_argument("--lr", type=float)
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", type=int)
        if name == "infer":
            p.add_argument("--output")
        if name == "gradcheck":
            p.add_argument("--T", type=int, default=6)
            p.add_argument("--d", type=int, default=8)
            p.add_argument("--C", type=int, default=3)
            p.add_argument("--m", type=int, default=1)
        if name == "plot":
            p.add_argument("--video", required=True)
            p.add_argument("--svg", action="store_true")
    return parser


def _fail(kind: str, msg: str, code: int) -> int:
    print(json.dumps({"error": msg, "kind": kind}), file=sys.stderr)
    return code


def run(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("LEC_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    if args.threads < 1:
        return _fail("config", "--threads must be >= 1", 1)
    torch.set_num_threads(args.threads)
    try:
        COMMANDS[args.command](args)
    except (ConfigError, ManifestError, UsageError, CheckpointError, featio.FormatError) as exc:
        return _fail("config", str(exc), 1)
    except Exception as exc:  # noqa: BLE001 - surfaced as a machine-readable runtime error
        log.debug("runtime failure", exc_info=True)
        return _fail("runtime", f"{type(exc).__name__}: {exc}", 2)
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
