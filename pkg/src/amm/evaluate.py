"""Clustering metrics, reconstructions, interpolations, and exports."""

from __future__ import annotations

import csv

import numpy as np
import torch
from scipy.optimize import linear_sum_assignment

from .game import TrainState, sample_inference_latents


def assign_cluster(y: np.ndarray) -> np.ndarray:
    """Per-row argmax over simplex rows; ties go to the lowest index."""
    y = np.asarray(y)
    if y.ndim != 2:
        raise ValueError("y must be an M x K matrix")
    return np.argmax(y, axis=1)


def cluster_matrix(pred, truth, k: int, c: int) -> np.ndarray:
    """K x C contingency counts: rows inferred component, columns true label."""
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    counts = np.zeros((k, c), dtype=np.int64)
    np.add.at(counts, (pred, truth), 1)
    return counts


def clustering_error(pred, truth, k: int, c: int, mode: str = "optimal") -> float:
    """Misassignment rate after mapping components to labels.

    mode "optimal" (requires k == c) finds the component-to-label
    bijection with the fewest errors; mode "majority" maps each component
    to its most frequent label, the natural choice when k > c.
    """
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.size == 0:
        raise ValueError("empty prediction batch")
    if pred.shape != truth.shape:
        raise ValueError("pred and truth differ in length")
    counts = cluster_matrix(pred, truth, k, c)
    if mode == "optimal":
        if k != c:
            raise ValueError("optimal assignment requires K == C")
        rows, cols = linear_sum_assignment(-counts)
        correct = counts[rows, cols].sum()
    elif mode == "majority":
        if k < c:
            raise ValueError("majority mapping expects K >= C")
        correct = counts.max(axis=1).sum()
    else:
        raise ValueError(f"unknown assignment mode {mode!r}")
    return 1.0 - correct / pred.size


@torch.no_grad()
def infer_latents(state: TrainState, x: np.ndarray, batch_size: int = 500):
    """Noise-free inference over a full dataset; returns (y, z) arrays."""
    gen = torch.Generator()  # unused at noise scale 0
    ys, zs = [], []
    for start in range(0, x.shape[0], batch_size):
        xb = torch.as_tensor(x[start : start + batch_size], dtype=torch.float32)
        _, y, z = sample_inference_latents(state, xb, gen, noise_scale=0.0)
        ys.append(y.numpy())
        zs.append(z.numpy())
    return np.concatenate(ys), np.concatenate(zs)


@torch.no_grad()
def reconstruct(state: TrainState, x) -> np.ndarray:
    """Encode then decode with sampling noise disabled."""
    gen = torch.Generator()
    xb = torch.as_tensor(np.asarray(x), dtype=torch.float32)
    _, y, z = sample_inference_latents(state, xb, gen, noise_scale=0.0)
    return state.decoder(y, z).numpy()


@torch.no_grad()
def latent_interpolate(state: TrainState, x_a, x_b, steps: int) -> np.ndarray:
    """Decode `steps` points along the line between two embeddings.

    Logits are interpolated and re-softmaxed so every frame's y stays on
    the simplex; endpoints reproduce the two reconstructions.
    """
    if steps < 2:
        raise ValueError("need at least 2 interpolation steps")
    gen = torch.Generator()
    pair = torch.as_tensor(
        np.stack([np.asarray(x_a), np.asarray(x_b)]), dtype=torch.float32
    )
    h_y, _, z = sample_inference_latents(state, pair, gen, noise_scale=0.0)
    t = torch.linspace(0.0, 1.0, steps).unsqueeze(1)
    h_path = (1.0 - t) * h_y[0] + t * h_y[1]
    z_path = (1.0 - t) * z[0] + t * z[1]
    y_path = torch.softmax(h_path, dim=1)
    return state.decoder(y_path, z_path).numpy()


@torch.no_grad()
def sample_component_grid(
    state: TrainState, per_component: int, gen: torch.Generator
) -> np.ndarray:
    """Decode `per_component` prior draws for every mixture component.

    Returns an array of shape (K, per_component, *image_shape); grid
    rendering puts components on rows and samples on columns.
    """
    k = state.num_components
    y = torch.eye(k).repeat_interleave(per_component, dim=0)
    mu = state.prior_mean_gen(y)
    sigma = y @ state.prior_stddevs
    z = mu + sigma * torch.randn(mu.shape, generator=gen)
    images = state.decoder(y, z).numpy()
    return images.reshape(k, per_component, *images.shape[1:])


def export_embeddings(state: TrainState, dataset, path) -> None:
    """CSV of inferred component, true label (-1 if none), and z coordinates."""
    y, z = infer_latents(state, dataset.images)
    comp = assign_cluster(y)
    labels = dataset.labels if dataset.labels is not None else np.full(len(comp), -1)
    dim = z.shape[1]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["component", "label"] + [f"z{i}" for i in range(dim)])
        for i in range(len(comp)):
            writer.writerow(
                [int(comp[i]), int(labels[i])] + [f"{v:.9g}" for v in z[i]]
            )


def save_image_grid(images: np.ndarray, path) -> None:
    """Write a 2D grid of images (rows x cols x H x W x C) as one PNG."""
    from PIL import Image

    images = np.asarray(images)
    if images.ndim == 4:  # single row
        images = images[None]
    rows, cols, h, w, c = images.shape
    sheet = np.zeros((rows * h, cols * w, c), dtype=np.uint8)
    tiles = np.clip(np.round(images * 255.0), 0, 255).astype(np.uint8)
    for r in range(rows):
        for col in range(cols):
            sheet[r * h : (r + 1) * h, col * w : (col + 1) * w] = tiles[r, col]
    if c == 1:
        Image.fromarray(sheet[..., 0], mode="L").save(path)
    else:
        Image.fromarray(sheet, mode="RGB").save(path)
