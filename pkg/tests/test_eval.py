import itertools

import numpy as np
import pytest
import torch

from amm.evaluate import (
    assign_cluster,
    cluster_matrix,
    clustering_error,
    export_embeddings,
    infer_latents,
    latent_interpolate,
    reconstruct,
    sample_component_grid,
    save_image_grid,
)
from amm.game import PenaltyConfig, build_train_state
from amm.networks import NetSpec


def _tiny_state(k=3, latent_dim=2, image_shape=(2,), **kw):
    means = np.random.default_rng(0).normal(size=(k, latent_dim))
    return build_train_state(
        image_shape=image_shape,
        k=k,
        latent_dim=latent_dim,
        net_spec=NetSpec(kind="dense", hidden=(16,)),
        prior_means=means,
        penalty=PenaltyConfig(10.0, True),
        batch_size=4,
        init_gen=torch.Generator().manual_seed(0),
        **kw,
    )


def test_assign_cluster_argmax_and_ties():
    y = np.array([[0.1, 0.7, 0.2], [0.5, 0.5, 0.0], [0.0, 0.0, 1.0]])
    assert np.array_equal(assign_cluster(y), [1, 0, 2])


def test_assign_cluster_rejects_vector():
    with pytest.raises(ValueError):
        assign_cluster(np.array([0.5, 0.5]))


def test_cluster_matrix_counts():
    pred = [0, 0, 1, 2, 2, 2]
    truth = [1, 1, 0, 2, 2, 0]
    m = cluster_matrix(pred, truth, 3, 3)
    expected = np.array([[0, 2, 0], [1, 0, 0], [1, 0, 2]])
    assert np.array_equal(m, expected)


def test_clustering_error_perfect_permutation():
    truth = np.array([0, 1, 2] * 10)
    pred = (truth + 1) % 3  # relabeled but perfectly separated
    assert clustering_error(pred, truth, 3, 3) == 0.0


def test_clustering_error_known_value():
    truth = np.array([0, 0, 0, 1, 1, 1])
    pred = np.array([1, 1, 0, 0, 0, 0])
    # best bijection maps 0->1, 1->0: 3+2 correct out of 6
    assert clustering_error(pred, truth, 2, 2) == pytest.approx(1 / 6)


def test_clustering_error_brute_force_oracle():
    rng = np.random.default_rng(1)
    for _ in range(200):
        k = int(rng.integers(2, 8))
        n = int(rng.integers(20, 80))
        pred = rng.integers(0, k, n)
        truth = rng.integers(0, k, n)
        got = clustering_error(pred, truth, k, k)
        best = min(
            np.mean(np.asarray(perm)[pred] != truth)
            for perm in itertools.permutations(range(k))
        )
        assert got == pytest.approx(best, abs=1e-12)


def test_clustering_error_majority_mode():
    # component 0 mostly label 1, component 1 mostly label 0,
    # component 2 split 2/1 toward label 2
    pred = np.array([0, 0, 0, 1, 1, 1, 2, 2, 2])
    truth = np.array([1, 1, 0, 0, 0, 1, 2, 2, 0])
    got = clustering_error(pred, truth, 3, 3, mode="majority")
    assert got == pytest.approx(1 - (2 + 2 + 2) / 9)


def test_clustering_error_majority_more_components():
    pred = np.array([0, 1, 2, 3, 0, 1, 2, 3])
    truth = np.array([0, 0, 1, 1, 0, 0, 1, 1])
    assert clustering_error(pred, truth, 4, 2, mode="majority") == 0.0


def test_clustering_error_validation():
    with pytest.raises(ValueError):
        clustering_error([0], [0, 1], 2, 2)
    with pytest.raises(ValueError):
        clustering_error([], [], 2, 2)
    with pytest.raises(ValueError):
        clustering_error([0], [0], 2, 3, mode="optimal")
    with pytest.raises(ValueError):
        clustering_error([0], [0], 2, 3, mode="majority")
    with pytest.raises(ValueError):
        clustering_error([0], [0], 2, 2, mode="nope")


def test_infer_latents_shapes_and_determinism():
    state = _tiny_state()
    x = np.random.default_rng(2).normal(size=(137, 2)).astype(np.float32)
    y1, z1 = infer_latents(state, x, batch_size=50)
    y2, z2 = infer_latents(state, x, batch_size=137)
    assert y1.shape == (137, 3) and z1.shape == (137, 2)
    # noise-free path is independent of batching
    assert np.allclose(y1, y2, atol=1e-6)
    assert np.allclose(z1, z2, atol=1e-6)
    assert np.allclose(y1.sum(axis=1), 1.0, atol=1e-5)


def test_reconstruct_shape_and_range():
    state = _tiny_state()
    x = np.random.default_rng(3).normal(size=(5, 2)).astype(np.float32)
    out = reconstruct(state, x)
    assert out.shape == (5, 2)
    assert np.all((out > 0.0) & (out < 1.0))


def test_latent_interpolate_endpoints_match_reconstructions():
    state = _tiny_state()
    x = np.random.default_rng(4).normal(size=(2, 2)).astype(np.float32)
    frames = latent_interpolate(state, x[0], x[1], steps=7)
    recon = reconstruct(state, x)
    assert frames.shape == (7, 2)
    assert np.allclose(frames[0], recon[0], atol=1e-5)
    assert np.allclose(frames[-1], recon[1], atol=1e-5)


def test_latent_interpolate_step_validation():
    state = _tiny_state()
    x = np.zeros((2, 2), dtype=np.float32)
    with pytest.raises(ValueError):
        latent_interpolate(state, x[0], x[1], steps=1)


def test_sample_component_grid_shape_and_determinism():
    state = _tiny_state()
    a = sample_component_grid(state, 4, torch.Generator().manual_seed(9))
    b = sample_component_grid(state, 4, torch.Generator().manual_seed(9))
    assert a.shape == (3, 4, 2)
    assert np.array_equal(a, b)


def test_export_embeddings_csv(tmp_path):
    state = _tiny_state()

    class DS:
        images = np.random.default_rng(5).normal(size=(6, 2)).astype(np.float32)
        labels = np.array([0, 1, 2, 0, 1, 2])

    path = tmp_path / "emb.csv"
    export_embeddings(state, DS, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "component,label,z0,z1"
    assert len(lines) == 7
    first = lines[1].split(",")
    assert first[0].isdigit() and first[1] == "0"
    float(first[2]), float(first[3])


def test_export_embeddings_unlabeled(tmp_path):
    state = _tiny_state()

    class DS:
        images = np.zeros((3, 2), dtype=np.float32)
        labels = None

    path = tmp_path / "emb.csv"
    export_embeddings(state, DS, path)
    rows = path.read_text().strip().splitlines()[1:]
    assert all(r.split(",")[1] == "-1" for r in rows)


def test_save_image_grid_grayscale(tmp_path):
    from PIL import Image

    images = np.random.default_rng(6).uniform(size=(2, 3, 4, 5, 1))
    path = tmp_path / "grid.png"
    save_image_grid(images, path)
    img = Image.open(path)
    assert img.size == (3 * 5, 2 * 4)
    assert img.mode == "L"


def test_save_image_grid_rgb_single_row(tmp_path):
    from PIL import Image

    images = np.random.default_rng(7).uniform(size=(4, 2, 2, 3))
    path = tmp_path / "row.png"
    save_image_grid(images, path)
    img = Image.open(path)
    assert img.size == (4 * 2, 2)
    assert img.mode == "RGB"
