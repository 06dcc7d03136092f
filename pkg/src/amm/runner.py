"""Training runs: dataset assembly, the step loop, metrics, checkpoints."""

from __future__ import annotations

import csv
import logging
import time
from pathlib import Path

import numpy as np
import torch

from . import data as datamod
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig
from .evaluate import assign_cluster, clustering_error, infer_latents
from .game import (
    PenaltyConfig,
    TrainState,
    amm_train_step,
    build_train_state,
    samm_train_step,
)
from .priors import CategoricalPrior, build_means

log = logging.getLogger("amm")

METRICS_COLUMNS = [
    "step", "l_d", "l_enc", "l_dec", "penalty",
    "mean_rho_q", "mean_rho_p", "val_cluster_error", "wall_clock",
]


def load_datasets(cfg: RunConfig):
    """Returns (train, val, labeled, test); val/test may be empty/None."""
    d = cfg.data
    if d.kind == "synthetic":
        train_full = datamod.make_synthetic_mixture(
            d.components, d.per_component, d.separation, d.data_seed, d.dim
        )
        test = datamod.make_synthetic_mixture(
            d.components, d.per_component, d.separation, d.data_seed + 1, d.dim
        )
        test.split = "test"
    elif d.kind == "mnist":
        train_full = datamod.load_mnist(d.train_images, d.train_labels)
        test = None
        if d.test_images is not None:
            test = datamod.load_mnist(d.test_images, d.test_labels, "test")
    else:
        train_full = datamod.load_raw_rgb(d.train_images)
        test = None
        if d.test_images is not None:
            test = datamod.load_raw_rgb(d.test_images, "test")
    spec = datamod.SplitSpec(
        d.val_count, d.labeled_count, d.split_seed, d.stratified_labels
    )
    train, val, labeled = datamod.split_and_select(train_full, spec)
    return train, val, labeled, test


def build_state(cfg: RunConfig, train: datamod.Dataset) -> TrainState:
    m = cfg.model
    means = build_means(m.means)
    if m.prior_probs == "uniform":
        probs = np.full(m.k, 1.0 / m.k)
    elif m.prior_probs == "data_frequency":
        if train.labels is None:
            raise ConfigError("prior_probs: data_frequency needs labeled data")
        probs = CategoricalPrior.from_labels(train.labels, m.k).probs
    else:
        probs = np.asarray(m.prior_probs, dtype=np.float64)
        probs = probs / probs.sum()
    init_gen = torch.Generator().manual_seed(cfg.optimization.seed)
    if cfg.data.kind == "synthetic":
        span = datamod.synthetic_value_span(cfg.data.separation)
        decoder_range = (-span, span)
    else:
        decoder_range = (0.0, 1.0)
    return build_train_state(
        image_shape=train.example_shape,
        k=m.k,
        latent_dim=m.latent_dim,
        net_spec=m.net,
        prior_means=means,
        prior_probs=probs,
        prior_stddevs=np.full((m.k, m.latent_dim), m.stddev),
        learned_means=m.learned_means,
        factorization=m.factorization,
        penalty=PenaltyConfig(
            cfg.optimization.penalty_lambda, cfg.optimization.penalty_enabled
        ),
        batch_size=cfg.optimization.batch_size,
        lr=cfg.optimization.lr,
        betas=(cfg.optimization.beta1, cfg.optimization.beta2),
        init_gen=init_gen,
        decoder_range=decoder_range,
    )


def _eval_error(state: TrainState, dataset, mode: str):
    if dataset is None or len(dataset) == 0 or dataset.labels is None:
        return None
    y, _ = infer_latents(state, dataset.images)
    pred = assign_cluster(y)
    c = int(dataset.labels.max()) + 1
    k = state.num_components
    if mode == "optimal" and k != c:
        mode = "majority"
    return clustering_error(pred, dataset.labels, k, c, mode=mode)


def train_run(
    cfg: RunConfig,
    out_dir,
    mode: str = "amm",
    resume=None,
) -> Path:
    """Run (or resume) training; returns the final checkpoint path.

    Writes `metrics.csv` (one row per eval cadence), periodic
    `checkpoint.pt`, `checkpoint_best.pt` on validation improvement, and
    `checkpoint_final.pt` at the end.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train, val, labeled, test = load_datasets(cfg)
    if mode == "samm" and len(labeled) == 0:
        raise ConfigError("samm mode requires data.labeled_count > 0")
    if mode not in ("amm", "samm"):
        raise ValueError(f"unknown training mode {mode!r}")

    state = build_state(cfg, train)
    if resume is not None:
        torch_gen, data_rng = load_checkpoint(resume, state, cfg)
        log.info("resumed from %s at step %d", resume, state.step)
    else:
        torch_gen = torch.Generator().manual_seed(cfg.optimization.seed + 1)
        data_rng = np.random.default_rng(cfg.optimization.seed + 2)

    k = state.num_components
    eye = np.eye(k, dtype=np.float32)
    m_batch = state.batch_size
    metrics_path = out_dir / "metrics.csv"
    new_file = resume is None or not metrics_path.exists()
    metrics_file = open(metrics_path, "w" if new_file else "a", newline="")
    writer = csv.writer(metrics_file)
    if new_file:
        writer.writerow(METRICS_COLUMNS)

    eval_set = val if len(val) > 0 else test
    best_err = np.inf
    start_time = time.time()
    max_steps = cfg.optimization.max_steps
    try:
        while state.step < max_steps:
            idx = data_rng.integers(0, len(train), size=m_batch)
            x_batch = torch.as_tensor(train.images[idx])
            if mode == "amm":
                metrics = amm_train_step(state, x_batch, torch_gen)
            else:
                lidx = data_rng.integers(0, len(labeled), size=m_batch)
                x_l = torch.as_tensor(labeled.images[lidx])
                y_l = torch.as_tensor(eye[labeled.labels[lidx]])
                metrics = samm_train_step(state, x_batch, (x_l, y_l), torch_gen)

            if state.step % cfg.eval.cadence == 0 or state.step == max_steps:
                err = _eval_error(state, eval_set, cfg.eval.assignment_mode)
                writer.writerow(
                    [
                        state.step,
                        f"{metrics.l_d:.6f}",
                        f"{metrics.l_enc:.6f}",
                        f"{metrics.l_dec:.6f}",
                        f"{metrics.penalty:.6f}",
                        f"{metrics.mean_rho_q:.6f}",
                        f"{metrics.mean_rho_p:.6f}",
                        "" if err is None else f"{err:.6f}",
                        f"{time.time() - start_time:.3f}",
                    ]
                )
                metrics_file.flush()
                log.info(
                    "step %d L_D=%.4f L_enc=%.4f L_dec=%.4f pen=%.4f val_err=%s",
                    state.step, metrics.l_d, metrics.l_enc, metrics.l_dec,
                    metrics.penalty, "n/a" if err is None else f"{err:.4f}",
                )
                if err is not None and err < best_err:
                    best_err = err
                    save_checkpoint(
                        out_dir / "checkpoint_best.pt", state, cfg, torch_gen, data_rng
                    )
            if state.step % cfg.eval.checkpoint_cadence == 0:
                save_checkpoint(
                    out_dir / "checkpoint.pt", state, cfg, torch_gen, data_rng
                )
    finally:
        metrics_file.close()
    final_path = out_dir / "checkpoint_final.pt"
    save_checkpoint(final_path, state, cfg, torch_gen, data_rng)
    return final_path


def load_run(cfg: RunConfig, checkpoint_path):
    """Rebuild a TrainState from a config and checkpoint for evaluation."""
    train, val, labeled, test = load_datasets(cfg)
    state = build_state(cfg, train)
    load_checkpoint(checkpoint_path, state, cfg)
    return state, (train, val, labeled, test)
