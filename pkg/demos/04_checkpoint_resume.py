"""Deterministic training and bit-exact checkpoint resume.

Every random draw in a run flows through explicit seeded generators, and
checkpoints capture parameters, optimizer moments, and both random
streams. So training N steps, checkpointing, and training N more is
byte-for-byte the same as training 2N steps straight through.
"""

import tempfile
from pathlib import Path

import numpy as np
import torch

from amm.checkpoint import load_checkpoint, save_checkpoint
from amm.config import parse_config
from amm.game import amm_train_step
from amm.runner import build_state, load_datasets

CONFIG = """
model:
  k: 3
  latent_dim: 2
  means:
    kind: circle
    radius: 6.0
  net:
    hidden: [32, 32]
optimization:
  max_steps: 200
  batch_size: 20
  seed: 0
data:
  kind: synthetic
  per_component: 100
"""

cfg = parse_config(CONFIG)
train, _, _, _ = load_datasets(cfg)


def fresh():
    state = build_state(cfg, train)
    gen = torch.Generator().manual_seed(cfg.optimization.seed + 1)
    rng = np.random.default_rng(cfg.optimization.seed + 2)
    return state, gen, rng


def advance(state, gen, rng, steps):
    for _ in range(steps):
        idx = rng.integers(0, len(train), size=20)
        amm_train_step(state, torch.as_tensor(train.images[idx]), gen)


workdir = Path(tempfile.mkdtemp())

# path A: 100 steps straight through
straight, gen_a, rng_a = fresh()
advance(straight, gen_a, rng_a, 100)

# path B: 50 steps, checkpoint to disk, reload, 50 more
half, gen_b, rng_b = fresh()
advance(half, gen_b, rng_b, 50)
ckpt = workdir / "halfway.pt"
save_checkpoint(ckpt, half, cfg, gen_b, rng_b)
print(f"checkpoint written at step {half.step}: {ckpt}")

resumed = build_state(cfg, train)  # fresh networks, all overwritten by load
gen_c, rng_c = load_checkpoint(ckpt, resumed, cfg)
print(f"resumed at step {resumed.step}")
advance(resumed, gen_c, rng_c, 50)

identical = all(
    torch.equal(p, q)
    for name, mod in straight.modules().items()
    for p, q in zip(mod.parameters(), resumed.modules()[name].parameters())
)
print(f"parameters after 50+50 match 100 straight: {identical}")
assert identical
