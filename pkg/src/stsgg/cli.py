"""Command-line entry point: ``stsgg {gen-data,train,eval,inspect}``.

Exit codes: 0 success, 1 user error (bad config, input or checkpoint), 2 internal error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, add_config_flags, flag_overrides, load_config
from .data.embed import EmbeddingProvider, MissingEmbeddingError, load_table
from .data.formats import ParseError, load_dataset, save_dataset
from .data.records import Dataset
from .data.synthetic import GenerationError, generate_synthetic
from .data.vocab import VocabularyError
from .matcher import CapacityError
from .metrics import MetricsConfigError, evaluate, oracle_predictions
from .model import SceneGraphModel
from .numeric import checkpoint
from .numeric.tensor import DimensionError
from .queries import CapacityError as QueryCapacityError, load_anchor_table, set_anchors
from .train import Trainer, TrainingError, predict

log = logging.getLogger("stsgg")

USER_ERRORS = (ConfigError, ParseError, VocabularyError, MissingEmbeddingError, checkpoint.CheckpointError,
               checkpoint.CompatibilityError, MetricsConfigError, CapacityError, QueryCapacityError,
               DimensionError, GenerationError, TrainingError, FileNotFoundError, NotADirectoryError,
               IsADirectoryError, PermissionError)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, rc: RunConfig, files: list[Path], extra: dict | None = None) -> Path:
    """Seed, echoed config and file digests; no timestamps so reruns are byte-identical."""
    cfg_path = out / "config.txt"
    cfg_path.write_text(rc.to_text(), encoding="utf-8")
    files = sorted(set(files) | {cfg_path})
    manifest = {
        "command": command,
        "seed": rc.seed,
        "files": {p.name: _sha256(p) for p in files},
        **(extra or {}),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def make_provider(rc: RunConfig) -> EmbeddingProvider:
    table = load_table(rc.embedding_table) if rc.embedding_table else None
    return EmbeddingProvider(rc.d_embed, rc.seed, table)


def make_model(rc: RunConfig, ds: Dataset) -> SceneGraphModel:
    cfg = rc.model(ds.vocab.num_objects, ds.vocab.group_sizes, ds.grid_size)
    model = SceneGraphModel(cfg, ds.features.shape[2] if ds.features.ndim == 3 else ds.vocab.num_objects, rc.seed)
    if rc.anchor_table:
        set_anchors(model.anchors, load_anchor_table(rc.anchor_table, cfg.num_queries, cfg.d_model))
    return model


# ---------------------------------------------------------------- commands

def cmd_gen_data(rc: RunConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    ds = generate_synthetic(rc.synthetic())
    files = save_dataset(out, ds)
    write_manifest(out, "gen-data", rc, files, {"frames": len(ds)})
    print(f"wrote {len(ds)} frames to {out}")
    return 0


def cmd_train(rc: RunConfig, data: Path, out: Path, resume: Path | None = None) -> int:
    ds = load_dataset(data)
    out.mkdir(parents=True, exist_ok=True)
    model = make_model(rc, ds)
    trainer = Trainer(model, ds, make_provider(rc), rc.loss(), rc.train())
    log_path = out / "train_log.jsonl"
    if resume is not None:
        trainer.restore(resume)
    else:
        log_path.write_text("", encoding="utf-8")
    remaining = max(0, rc.steps - trainer.step_index)
    history = trainer.run(remaining, log_path)
    ckpt = out / "checkpoint.ckpt"
    trainer.save(ckpt)
    final = history[-1]["total"] if history else None
    write_manifest(out, "train", rc, [ckpt, log_path], {"steps": trainer.step_index, "final_loss": final})
    print(f"trained {trainer.step_index} steps; final loss {final}")
    return 0


def cmd_eval(rc: RunConfig, data: Path, ckpt: Path | None, out: Path, oracle: bool = False) -> int:
    ds = load_dataset(data)
    out.mkdir(parents=True, exist_ok=True)
    if oracle:
        preds = [oracle_predictions(a, rc.num_queries, ds.vocab.num_objects, ds.vocab.num_predicates)
                 for a in ds.annotations]
    else:
        if ckpt is None:
            raise ConfigError("eval needs --checkpoint (or --oracle)")
        model = make_model(rc, ds)
        model.store.load_state(checkpoint.load(ckpt))
        preds = predict(model, ds, make_provider(rc), max_cues=rc.max_cues)
    report = evaluate(preds, ds.annotations, ds.vocab, rc.modes, rc.constraints, rc.ks, rc.iou_threshold,
                      rc.constraint_scope, rc.loss())
    report.meta = {"frames": len(ds), "oracle": oracle}
    files = [out / "report.txt", out / "report.json", out / "per_predicate.csv"]
    files[0].write_text(report.text_table(), encoding="utf-8")
    files[1].write_text(report.json_text(), encoding="utf-8")
    files[2].write_text(report.per_predicate_csv(), encoding="utf-8")
    write_manifest(out, "eval", rc, files, {"frames": len(ds)})
    sys.stdout.write(report.text_table())
    return 0


def cmd_inspect(path: Path) -> int:
    if path.is_dir():
        for p in sorted(path.iterdir()):
            print(p.name)
        return 0
    raw = path.read_bytes()
    if raw.startswith(checkpoint.MAGIC.encode()):
        for name, a in checkpoint.loads(raw).items():
            print(f"{name:40s} {a.shape[0]:>5d} x {a.shape[1]:<5d} mean {a.mean():+.4e}  max|.| {np.abs(a).max():.4e}")
        return 0
    if path.suffix == ".npy":
        a = np.load(path, allow_pickle=False)
        print(f"array {a.shape} {a.dtype}; min {a.min() if a.size else 0} max {a.max() if a.size else 0}")
        return 0
    text = raw.decode("utf-8")
    if path.suffix == ".jsonl":
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: malformed record ({exc.msg})") from None
            print(f"# record {lineno}")
            print(json.dumps(rec, indent=2, sort_keys=True))
        return 0
    if path.suffix == ".json":
        try:
            print(json.dumps(json.loads(text), indent=2, sort_keys=True))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: malformed JSON ({exc.msg})") from None
        return 0
    sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------- argument parsing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stsgg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", type=Path, help="key = value config file")
        add_config_flags(p)
        return p

    g = with_config(sub.add_parser("gen-data", help="write a synthetic dataset"))
    g.add_argument("--out", type=Path, required=True)

    t = with_config(sub.add_parser("train", help="train on a dataset directory"))
    t.add_argument("--data", type=Path, required=True)
    t.add_argument("--out", type=Path, required=True)
    t.add_argument("--resume", type=Path, help="checkpoint to continue from")

    e = with_config(sub.add_parser("eval", help="evaluate a checkpoint"))
    e.add_argument("--data", type=Path, required=True)
    e.add_argument("--checkpoint", type=Path)
    e.add_argument("--oracle", action="store_true", help="score ground truth injected as predictions")
    e.add_argument("--out", type=Path, required=True)

    i = sub.add_parser("inspect", help="pretty-print a data, report or checkpoint file")
    i.add_argument("path", type=Path)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "inspect":
            return cmd_inspect(args.path)
        rc = load_config(args.config, flag_overrides(args))
        if args.command == "gen-data":
            return cmd_gen_data(rc, args.out)
        if args.command == "train":
            return cmd_train(rc, args.data, args.out, args.resume)
        return cmd_eval(rc, args.data, args.checkpoint, args.out, args.oracle)
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
