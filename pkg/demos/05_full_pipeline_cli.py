"""Miniature end-to-end run through the command-line interface.

Generates a handful of synthetic recordings, then walks the full chain:
detect -> embed (toy band-energy vectors) -> cluster -> validate ->
export -> score -> eval, all in a temporary directory.
"""
import json
import tempfile
from pathlib import Path

import numpy as np

from pamkit.audio import AudioClip, load_audio, save_audio
from pamkit.cli import main
from pamkit.cluster import Embedding, write_embeddings
from pamkit.store import DatasetStore, SegmentRecord

rate = 8000
rng = np.random.default_rng(4)
work = Path(tempfile.mkdtemp(prefix="pamkit-demo-"))
audio_dir = work / "audio"
audio_dir.mkdir()
print(f"working under {work}")

config_path = work / "config.yaml"
config_path.write_text(
    """
species:
  - species_id: whistler
    f_low_hz: 900
    f_high_hz: 1100
    min_dur_s: 0.5
    max_dur_s: 5.0
    mel_config: MF
reduction:
  n_neighbors: 8
  n_epochs: 60
density:
  min_cluster_size: 8
  min_samples: 2
seed: 5
"""
)

# ten 30 s recordings; six contain a 1 kHz call
sigma = np.sqrt(0.5 * 1e-4)
truth = {}
for i in range(10):
    samples = sigma * rng.standard_normal(30 * rate)
    present = i < 6
    if present:
        t = np.arange(2 * rate) / rate
        n0 = int(12.0 * rate)
        samples[n0 : n0 + 2 * rate] += 0.03 * np.sin(2 * np.pi * 1000 * t)
    name = f"rec{i}.wav"
    truth[name] = present
    save_audio(AudioClip(samples, rate, name), audio_dir / name)

main(["--config", str(config_path), "detect", "--input-dir", str(audio_dir),
      "--out", str(work / "candidates.jsonl")])
candidates = [json.loads(l) for l in (work / "candidates.jsonl").read_text().splitlines()][1:]
print(f"detected {len(candidates)} candidates")

# toy embeddings: band-energy vectors around the call band
def embed(samples):
    spec = np.abs(np.fft.rfft(samples)) ** 2 / len(samples) ** 2
    freqs = np.fft.rfftfreq(len(samples), 1 / rate)
    edges = np.linspace(200, 3600, 9)
    return np.log(np.array([spec[(freqs >= a) & (freqs < b)].sum()
                            for a, b in zip(edges, edges[1:])]) + 1e-20)

store = DatasetStore(work / "store")
embeddings = []
for c in candidates:
    seg = SegmentRecord.create(c["source_id"], c["t_start_s"], c["t_end_s"],
                               species_hint=c["species_hint"])
    store.upsert_segments([seg])
    clip = load_audio(audio_dir / c["source_id"])
    piece = clip.slice_seconds(c["t_start_s"], c["t_end_s"])
    embeddings.append(Embedding(seg.segment_id, "bandenergy", embed(piece.samples)))
refs = []
ref_labels = {}
for i in range(6):
    samples = sigma * rng.standard_normal(int(3.5 * rate))
    n0 = int(0.75 * rate)
    t = np.arange(2 * rate) / rate
    samples[n0 : n0 + 2 * rate] += 0.03 * np.sin(2 * np.pi * 1000 * t)
    refs.append(Embedding(f"ref{i}", "bandenergy", embed(samples)))
    ref_labels[f"ref{i}"] = "whistler"
# background embeddings give the clusterer a second group to separate from
backgrounds = [
    Embedding(f"bg{i}", "bandenergy", embed(sigma * rng.standard_normal(int(3.5 * rate))))
    for i in range(10)
]
write_embeddings(work / "cand.pfge", embeddings)
write_embeddings(work / "ref.pfge", refs)
write_embeddings(work / "bg.pfge", backgrounds)
(work / "ref_labels.json").write_text(json.dumps(ref_labels))

main(["--config", str(config_path), "cluster", "--embeddings", str(work / "cand.pfge"),
      "--references", str(work / "ref.pfge"), "--backgrounds", str(work / "bg.pfge"),
      "--ref-labels", str(work / "ref_labels.json"),
      "--out", str(work / "assignments.jsonl")])
assignments = [json.loads(l) for l in (work / "assignments.jsonl").read_text().splitlines()][1:]

known = set(store.segments())
validated = 0
for a in assignments:
    if a["suggested_label"] == "whistler" and a["segment_id"] in known:
        store.record_decision(a["segment_id"], "whistler", annotator="demo")
        validated += 1
# a couple of quiet intervals as negatives
for i in range(4):
    seg = SegmentRecord.create(f"rec{i}.wav", 24.0, 29.0)
    store.upsert_segments([seg])
    store.record_decision(seg.segment_id, "NEGATIVE", annotator="demo")
print(f"validated {validated} segments from suggestions")

main(["--config", str(config_path), "export", "--store", str(work / "store"),
      "--audio-root", str(audio_dir), "--out", str(work / "export"), "--augment"])
header = json.loads((work / "export" / "manifest.jsonl").read_text().splitlines()[0])
print(f"export counts: {header['counts']}")

# trivial energy scorer at the file level
with open(work / "scores.jsonl", "w") as sf, open(work / "labels.jsonl", "w") as lf:
    for name, present in truth.items():
        clip = load_audio(audio_dir / name)
        scores = []
        for k in range(3):
            piece = clip.samples[k * 10 * rate : (k + 1) * 10 * rate]
            spec = np.abs(np.fft.rfft(piece)) ** 2 / len(piece) ** 2
            freqs = np.fft.rfftfreq(len(piece), 1 / rate)
            db = 10 * np.log10(spec[(freqs >= 900) & (freqs <= 1100)].sum() / 0.5 + 1e-30)
            scores.append(float(np.clip((db + 55) / 30, 0, 1)))
        sf.write(json.dumps({"file_id": name, "species": "whistler", "scores": scores}) + "\n")
        lf.write(json.dumps({"file_id": name, "species": "whistler", "present": present}) + "\n")

main(["--config", str(config_path), "eval", "--scores", str(work / "scores.jsonl"),
      "--labels", str(work / "labels.jsonl"), "--out", str(work / "report.json"),
      "--csv", str(work / "report.csv")])
print((work / "report.csv").read_text())
