"""Command line: ``stopgo stats|build|train|eval|ablate|fixtures``.

Exit codes: 0 success, 2 configuration error, 3 data error, 1 anything else.
``STOPGO_DATA_DIR`` supplies the default ``--data`` location.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .errors import ConfigError, DataError, StopGoError
from .schema import SplitName

DATA_ENV = "STOPGO_DATA_DIR"
log = logging.getLogger("stopgo")


def _data_default():
    return os.environ.get(DATA_ENV)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def _emit(args, payload: dict, text: str) -> None:
    print(_dump(payload) if args.json else text)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _load_tracks(args):
    from .ingest import ingest
    if not args.data:
        raise ConfigError(f"no --data given and {DATA_ENV} is not set")
    diagnostics = []
    tracks = ingest(args.data, args.layout, diagnostics)
    for msg in diagnostics:
        log.warning("%s", msg)
    return tracks


def _splits_path(args) -> Path:
    if getattr(args, "splits", None):
        return Path(args.splits)
    data = Path(args.data)
    return (data if data.is_dir() else data.parent) / "splits.json"


def _load_splits(args):
    from .ingest import load_splits
    path = _splits_path(args)
    if not path.exists():
        raise DataError(f"split file {path} not found")
    return load_splits(path)


def _model_spec(args, base: dict):
    from .model import ModelSpec
    d = dict(base)
    for key in ("family", "modalities", "visual", "T"):
        value = getattr(args, key, None)
        if value is not None:
            d[key] = value
    if "family" not in d:
        mods = d.get("modalities", "IMBS").upper()
        d["family"] = "video" if mods == "I" else "hybrid"
    return ModelSpec.from_dict(d)


def _train_config(args):
    from .model import TrainConfig, load_config
    model, train = ({}, TrainConfig()) if not args.config else load_config(args.config)
    if args.seed is not None:
        train.seed = args.seed
    return model, train


# -- commands -----------------------------------------------------------------

def cmd_stats(args) -> int:
    from .extract import dataset_stats, format_stats
    tracks = _load_tracks(args)
    rows = []
    if args.by_split:
        splits = _load_splits(args)
        for name in SplitName:
            ids = splits[name].clip_ids
            rows.append(dataset_stats([t for t in tracks if t.clip_id in ids], name.value))
    rows.append(dataset_stats(tracks, args.name))
    _emit(args, {"rows": [r.as_dict() for r in rows]}, format_stats(rows))
    return 0


def cmd_build(args) -> int:
    from .dataset import SampleSpec, build_samples, class_counts, write_samples
    tracks = _load_tracks(args)
    splits = _load_splits(args)
    spec = SampleSpec(task=args.task, T=args.T, horizon=args.horizon, sample_fps=args.sample_fps,
                      min_box_width=args.min_width, stride=args.stride)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"sample_spec": spec.to_dict(), "splits": {}}
    for name in SplitName:
        ids = splits[name].clip_ids
        samples = build_samples(tracks, spec, splits[name])
        path = out / f"samples_{name.value}.jsonl"
        write_samples(samples, path)
        manifest["splits"][name.value] = {"file": path.name, "sha256": _sha256(path),
                                          "tracks": sum(t.clip_id in ids for t in tracks),
                                          **class_counts(samples)}
    (out / "manifest.json").write_text(_dump(manifest) + "\n")
    text = "\n".join(f"{n:5s}  {v['positive']:6d} positive  {v['negative']:6d} negative"
                     for n, v in manifest["splits"].items())
    _emit(args, manifest, text)
    return 0


def _read_built(directory, split: str):
    from .dataset import read_samples
    path = Path(directory) / f"samples_{split}.jsonl"
    if not path.exists():
        raise DataError(f"{path} not found; run 'stopgo build' first")
    return read_samples(path)


def _check_task(samples, task, where):
    if task is not None and samples and samples[0].task.value != task:
        raise ConfigError(f"{where} was built for task {samples[0].task.value!r}, not {task!r}")


def cmd_train(args) -> int:
    from .model import train_model
    base, cfg = _train_config(args)
    spec = _model_spec(args, base)
    train = _read_built(args.samples, "train")
    val = _read_built(args.samples, "val")
    _check_task(train, args.task, args.samples)
    result = train_model(spec, train, val, cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    extra = {"train_config": cfg.to_dict(), "history": result.history, "stage1": result.stage1,
             "best_epoch": result.best_epoch, "task": train[0].task.value}
    result.model.save(out, extra)
    payload = {"checkpoint": str(out), "model": spec.label, "best_epoch": result.best_epoch,
               "best_val_ap": result.best_val_ap, "epochs": len(result.history)}
    text = (f"{spec.label}: {len(result.history)} epochs, best epoch {result.best_epoch}, "
            f"val AP {result.best_val_ap:.4f} -> {out}")
    _emit(args, payload, text)
    return 0


def cmd_eval(args) -> int:
    from .bench.evaluate import evaluate
    from .model import StopGoModel
    model = StopGoModel.load(args.checkpoint)
    test = _read_built(args.samples, args.split)
    T = model.spec.T
    test = [s if s.T == T else s.last(T) for s in test]
    report = evaluate(model, test, trials=args.trials, master_seed=args.seed)
    if args.out:
        Path(args.out).write_text(_dump(report.to_dict()) + "\n")
    aps = " ".join(f"{100 * a:.1f}" for a in report.trial_aps)
    _emit(args, report.to_dict(),
          f"{report.model_id} [{report.task}] mean AP {100 * report.mean_ap:.2f}  trials: {aps}")
    return 0


def cmd_ablate(args) -> int:
    from .bench.ablation import modality_grid, run_ablation, temporal_grid
    from .dataset import SampleSpec
    base, cfg = _train_config(args)
    spec = _model_spec(argparse.Namespace(), base) if base else None
    if args.grid == "modality":
        grid = modality_grid(spec)
    else:
        grid = temporal_grid([int(t) for t in args.Ts.split(",")])
    tracks = _load_tracks(args)
    splits = _load_splits(args)
    result = run_ablation(grid, tracks, splits, args.tasks.split(","), cfg,
                          SampleSpec(min_box_width=args.min_width), args.trials, args.seed or 0)
    if args.out:
        Path(args.out).write_text(_dump(result.to_dict()) + "\n")
    _emit(args, result.to_dict(), result.table())
    return 0


def cmd_fixtures(args) -> int:
    from .bench.fixtures import gen_fixtures
    options = json.loads(args.options) if args.options else {}
    if not isinstance(options, dict):
        raise ConfigError("--options must be a JSON object")
    manifest = gen_fixtures(args.recipe, args.seed, args.out, **options)
    _emit(args, manifest, f"{args.recipe}: {manifest['tracks']} tracks -> {args.out}")
    return 0


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stopgo", description="Pedestrian stop/go prediction benchmark.")
    p.add_argument("--version", action="version", version=f"stopgo {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        sp.add_argument("--json", action="store_true", help="print machine-readable JSON")
        if data:
            sp.add_argument("--data", default=_data_default(),
                            help=f"track file or directory (default ${DATA_ENV})")
            sp.add_argument("--layout", default="unified",
                            choices=["unified", "jaad-like", "pie-like", "titan-like"])

    sp = sub.add_parser("stats", help="category and event counts: Go [events], Stop [events], Stand, Walk")
    common(sp)
    sp.add_argument("--splits", help="split file (default: splits.json next to the data)")
    sp.add_argument("--by-split", action="store_true", help="add one row per split")
    sp.add_argument("--name", default="total", help="label of the total row")
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("build", help="build labeled windows per split")
    common(sp)
    sp.add_argument("--splits")
    sp.add_argument("--task", choices=["go", "stop"], required=True)
    sp.add_argument("--T", type=int, default=5, help="frames per window")
    sp.add_argument("--horizon", type=float, default=2.0, help="prediction horizon in seconds")
    sp.add_argument("--sample-fps", type=float, default=5.0)
    sp.add_argument("--min-width", type=float, default=24.0, help="minimum last-frame box width (px)")
    sp.add_argument("--stride", type=int, default=1)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_build)

    sp = sub.add_parser("train", help="train one model on built samples")
    common(sp, data=False)
    sp.add_argument("--samples", required=True, help="directory written by 'build'")
    sp.add_argument("--task", choices=["go", "stop"])
    sp.add_argument("--family", choices=["static", "video", "hybrid"])
    sp.add_argument("--modalities", help="subset of IMBS")
    sp.add_argument("--visual", choices=["cb", "cc", "rc"])
    sp.add_argument("--T", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--config", help="JSON config with 'model' and 'train' sections")
    sp.add_argument("--out", required=True, help="checkpoint path")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="balanced AP over randomized trials")
    common(sp, data=False)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--samples", required=True)
    sp.add_argument("--split", default="test", choices=["train", "val", "test"])
    sp.add_argument("--trials", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0, help="master seed for trial draws")
    sp.add_argument("--out", help="write the report JSON here")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("ablate", help="modality or sequence-length sweep")
    common(sp)
    sp.add_argument("--splits")
    sp.add_argument("--grid", choices=["modality", "temporal"], default="modality")
    sp.add_argument("--Ts", default="1,5,10,15", help="comma-separated T values (temporal grid)")
    sp.add_argument("--tasks", default="go,stop")
    sp.add_argument("--config")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--trials", type=int, default=10)
    sp.add_argument("--min-width", type=float, default=24.0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("fixtures", help="generate synthetic tracks")
    common(sp, data=False)
    sp.add_argument("--recipe", required=True, choices=["random", "separable", "table1"])
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--options", help="JSON object of recipe options")
    sp.set_defaults(func=cmd_fixtures)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"stopgo: configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"stopgo: data error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"stopgo: data error: {exc.filename}: {exc.strerror or exc}", file=sys.stderr)
        return 3
    except StopGoError as exc:
        print(f"stopgo: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
