"""Train Static, Video and Hybrid models on separable synthetic tracks and compare AP.

    python3 demos/quickstart.py [--task go|stop] [--out DIR]

Takes a few minutes on one CPU core.
"""
import argparse
import tempfile
from pathlib import Path

from stopgo.bench.evaluate import evaluate
from stopgo.bench.fixtures import gen_fixtures
from stopgo.dataset import SampleSpec, build_samples, class_counts
from stopgo.ingest import ingest, load_splits
from stopgo.model import ModelSpec, TrainConfig, train_model
from stopgo.schema import SplitName


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--task", default="go", choices=["go", "stop"])
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    out = Path(args.out or tempfile.mkdtemp(prefix="stopgo_demo_"))

    gen_fixtures("separable", 0, out)
    tracks, splits = ingest(out / "tracks.jsonl"), load_splits(out / "splits.json")
    data = {n: build_samples(tracks, SampleSpec(task=args.task), splits[n]) for n in SplitName}
    for n, samples in data.items():
        print(f"{n.value:5s} {class_counts(samples)}")

    for spec in (ModelSpec("static", "I"), ModelSpec("video", "I"), ModelSpec("hybrid", "IMBS")):
        result = train_model(spec, data[SplitName.TRAIN], data[SplitName.VAL], TrainConfig())
        report = evaluate(result.model, data[SplitName.TEST])
        print(f"{spec.label:18s} best epoch {result.best_epoch:2d}  test AP {report.mean_ap:.3f}")


if __name__ == "__main__":
    main()
