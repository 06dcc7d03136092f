"""Command-line front end.

Subcommands: convert-data, train, eval, sample, reconstruct, interpolate,
export-embeddings. Verbosity is controlled by the AMM_LOG environment
variable (error, info, debug).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np
import torch

from . import data as datamod
from .config import ConfigError, load_config
from .evaluate import (
    assign_cluster,
    clustering_error,
    export_embeddings,
    latent_interpolate,
    reconstruct,
    sample_component_grid,
    save_image_grid,
)
from .priors import bayes_classify_batch
from .runner import load_run, train_run

log = logging.getLogger("amm")


def _setup_logging() -> None:
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("AMM_LOG", "info").lower(), logging.INFO
    )
    logging.basicConfig(level=level, format="%(levelname)s %(message)s")


def _load_config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(
            cfg, optimization=dataclasses.replace(cfg.optimization, seed=args.seed)
        )
    return cfg


def _find_checkpoint(args):
    if args.resume:
        return Path(args.resume)
    out = Path(args.out)
    for name in ("checkpoint_final.pt", "checkpoint_best.pt", "checkpoint.pt"):
        if (out / name).exists():
            return out / name
    raise FileNotFoundError(f"no checkpoint found in {out}")


def _as_grid_images(images: np.ndarray) -> np.ndarray:
    """Reshape flat (non-image) examples to 1-pixel-tall grayscale strips."""
    images = np.asarray(images)
    if images.ndim == 2:  # (N, D) flat vectors, e.g. the synthetic benchmark
        n, d = images.shape
        span = max(abs(float(images.min())), abs(float(images.max())), 1e-9)
        return ((images / span + 1.0) / 2.0).reshape(n, 1, d, 1)
    return images


def cmd_convert_data(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.data.kind == "raw_rgb" and args.input:
        n = datamod.convert_svhn_mat(args.input, out / "converted.ammraw")
        print(f"converted {n} examples to {out / 'converted.ammraw'}")
    elif cfg.data.kind == "synthetic":
        d = cfg.data
        for tag, seed in (("train", d.data_seed), ("test", d.data_seed + 1)):
            ds = datamod.make_synthetic_mixture(
                d.components, d.per_component, d.separation, seed, d.dim
            )
            np.savez(out / f"synthetic_{tag}.npz", points=ds.images, labels=ds.labels)
        print(f"wrote synthetic train/test archives to {out}")
    else:
        # mnist files ship in their final format; just validate them
        datamod.load_mnist(cfg.data.train_images, cfg.data.train_labels)
        print("dataset files validated; nothing to convert")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    final = train_run(cfg, args.out, mode=args.mode, resume=args.resume)
    print(f"training finished at {final}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    state, (train, val, labeled, test) = load_run(cfg, _find_checkpoint(args))
    target = test if test is not None else (val if len(val) else train)
    from .evaluate import infer_latents

    y, z = infer_latents(state, target.images)
    pred = assign_cluster(y)
    if target.labels is None:
        print("no labels available; skipping error metrics")
        return 0
    c = int(target.labels.max()) + 1
    k = state.num_components
    mode = cfg.eval.assignment_mode
    if mode == "optimal" and k != c:
        mode = "majority"
    err = clustering_error(pred, target.labels, k, c, mode=mode)
    print(f"clustering_error {err:.6f}")
    bayes_pred = bayes_classify_batch(state.mixture_prior(), z)
    bayes_err = clustering_error(bayes_pred, target.labels, k, c, mode=mode)
    agreement = float(np.mean(pred == bayes_pred))
    print(f"bayes_classifier_error {bayes_err:.6f}")
    print(f"encoder_bayes_agreement {agreement:.6f}")
    return 0


def cmd_sample(args) -> int:
    cfg = _load_config(args)
    state, _ = load_run(cfg, _find_checkpoint(args))
    gen = torch.Generator().manual_seed(cfg.optimization.seed + 3)
    grid = sample_component_grid(state, args.count, gen)
    k, n = grid.shape[:2]
    flat = _as_grid_images(grid.reshape(k * n, *grid.shape[2:]))
    grid = flat.reshape(k, n, *flat.shape[1:])
    path = Path(args.out) / "samples.png"
    save_image_grid(grid, path)
    print(f"wrote {path}")
    return 0


def cmd_reconstruct(args) -> int:
    cfg = _load_config(args)
    state, (train, val, labeled, test) = load_run(cfg, _find_checkpoint(args))
    source = test if test is not None else train
    x = source.images[: args.count]
    recon = reconstruct(state, x)
    pairs = np.stack([_as_grid_images(x), _as_grid_images(recon)])  # 2 rows
    path = Path(args.out) / "reconstructions.png"
    save_image_grid(pairs, path)
    print(f"wrote {path}")
    return 0


def cmd_interpolate(args) -> int:
    cfg = _load_config(args)
    state, (train, val, labeled, test) = load_run(cfg, _find_checkpoint(args))
    source = test if test is not None else train
    frames = latent_interpolate(state, source.images[0], source.images[1], args.steps)
    path = Path(args.out) / "interpolation.png"
    save_image_grid(_as_grid_images(frames)[None], path)
    print(f"wrote {path}")
    return 0


def cmd_export_embeddings(args) -> int:
    cfg = _load_config(args)
    state, (train, val, labeled, test) = load_run(cfg, _find_checkpoint(args))
    source = test if test is not None else train
    path = Path(args.out) / "embeddings.csv"
    export_embeddings(state, source, path)
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amm", description="Adversarially learned mixture models"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="run configuration (YAML)")
        p.add_argument("--out", default="runs/default", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--resume", default=None, help="checkpoint to load")

    p = sub.add_parser("convert-data", help="convert or materialize dataset files")
    common(p)
    p.add_argument("--input", default=None, help="source file for conversion")
    p.set_defaults(func=cmd_convert_data)

    p = sub.add_parser("train", help="run adversarial training")
    common(p)
    p.add_argument("--mode", choices=("amm", "samm"), default="amm")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="report clustering / classification error")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample", help="write a per-component sample grid")
    common(p)
    p.add_argument("--count", type=int, default=10, help="samples per component")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("reconstruct", help="write input/reconstruction pairs")
    common(p)
    p.add_argument("--count", type=int, default=10)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("interpolate", help="write a latent interpolation strip")
    common(p)
    p.add_argument("--steps", type=int, default=8)
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("export-embeddings", help="write embeddings CSV")
    common(p)
    p.set_defaults(func=cmd_export_embeddings)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError, RuntimeError) as e:
        log.error("%s", e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
