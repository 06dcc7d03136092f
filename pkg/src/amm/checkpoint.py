"""Checkpoint save/load with bit-exact resume.

A checkpoint captures everything a training run consumes: parameters,
optimizer moments, the latent prior, the step counter, both random
streams, and an echo of the run configuration for conflict detection.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import torch

from .config import RunConfig
from .game import PenaltyConfig, TrainState, build_train_state

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(
    path,
    state: TrainState,
    config: RunConfig,
    torch_gen: torch.Generator,
    data_rng: np.random.Generator,
) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "step": state.step,
        "modules": {name: mod.state_dict() for name, mod in state.modules().items()},
        "optimizers": {name: opt.state_dict() for name, opt in state.optimizers.items()},
        "prior_probs": state.prior_probs,
        "prior_stddevs": state.prior_stddevs,
        "penalty": dataclasses.asdict(state.penalty),
        "batch_size": state.batch_size,
        "factorization": state.factorization,
        "learned_means": state.learned_means,
        "config": dataclasses.asdict(config),
        "torch_rng": torch_gen.get_state(),
        "data_rng": data_rng.bit_generator.state,
    }
    torch.save(payload, path)


def load_checkpoint(path, state: TrainState, config: RunConfig):
    """Restore `state` in place; returns (torch generator, data rng).

    The networks in `state` must have been built from a configuration
    compatible with the checkpoint's.
    """
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise CheckpointError(f"{path}: not an AMM checkpoint")
    version = payload["format_version"]
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint format version {version}, expected {FORMAT_VERSION}"
        )
    saved_model = payload["config"]["model"]
    if saved_model["k"] != config.model.k:
        raise CheckpointError(
            f"{path}: checkpoint has K={saved_model['k']}, config has K={config.model.k}"
        )
    if saved_model["latent_dim"] != config.model.latent_dim:
        raise CheckpointError(
            f"{path}: checkpoint latent_dim {saved_model['latent_dim']} "
            f"!= config {config.model.latent_dim}"
        )
    for name, mod in state.modules().items():
        mod.load_state_dict(payload["modules"][name])
    for name, opt in state.optimizers.items():
        opt.load_state_dict(payload["optimizers"][name])
    state.prior_probs = payload["prior_probs"]
    state.prior_stddevs = payload["prior_stddevs"]
    state.penalty = PenaltyConfig(**payload["penalty"])
    state.batch_size = payload["batch_size"]
    state.factorization = payload["factorization"]
    state.learned_means = payload["learned_means"]
    state.step = payload["step"]

    torch_gen = torch.Generator()
    torch_gen.set_state(payload["torch_rng"])
    data_rng = np.random.default_rng()
    data_rng.bit_generator.state = payload["data_rng"]
    return torch_gen, data_rng
