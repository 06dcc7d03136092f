"""The full command-line pipeline on the synthetic benchmark.

Drives the `amm` CLI end to end: materialize data, train, evaluate, and
produce every artifact (sample grid, reconstructions, interpolation
strip, embeddings CSV). Everything lands in a temporary directory.
"""

import tempfile
from pathlib import Path

from amm.cli import main

CONFIG = """
model:
  k: 3
  latent_dim: 2
  means:
    kind: circle
    radius: 6.0
  net:
    hidden: [64, 64]
optimization:
  max_steps: 1500
  batch_size: 100
  seed: 4
data:
  kind: synthetic
  per_component: 500
eval:
  cadence: 250
  checkpoint_cadence: 1000
"""

workdir = Path(tempfile.mkdtemp())
cfg = workdir / "run.yaml"
cfg.write_text(CONFIG)
out = workdir / "run"

steps = [
    ["convert-data", "--config", str(cfg), "--out", str(workdir / "data")],
    ["train", "--config", str(cfg), "--out", str(out)],
    ["eval", "--config", str(cfg), "--out", str(out)],
    ["sample", "--config", str(cfg), "--out", str(out), "--count", "8"],
    ["reconstruct", "--config", str(cfg), "--out", str(out), "--count", "8"],
    ["interpolate", "--config", str(cfg), "--out", str(out), "--steps", "10"],
    ["export-embeddings", "--config", str(cfg), "--out", str(out)],
]

for argv in steps:
    print(f"\n$ amm {' '.join(argv)}")
    code = main(argv)
    assert code == 0, f"command failed: {argv}"

print("\nartifacts:")
for p in sorted(out.iterdir()):
    print(f"  {p.name}  ({p.stat().st_size} bytes)")
