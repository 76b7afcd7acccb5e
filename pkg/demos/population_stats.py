"""Generate the calibrated pedestrian population and print its category/event table."""
import tempfile
from pathlib import Path

from stopgo.bench.fixtures import gen_fixtures
from stopgo.extract import dataset_stats, format_stats
from stopgo.ingest import ingest, load_splits
from stopgo.schema import SplitName

out = Path(tempfile.mkdtemp(prefix="stopgo_pop_"))
manifest = gen_fixtures("table1", 0, out)
tracks = ingest(out / "tracks.jsonl")
splits = load_splits(out / "splits.json")

rows = [dataset_stats([t for t in tracks if t.clip_id in splits[n].clip_ids], n.value) for n in SplitName]
rows.append(dataset_stats(tracks, "total"))
print(format_stats(rows))
print("planned:", manifest["expected"])
