"""Run configuration: YAML parsing with strict validation.

Unknown keys and missing required keys are rejected with their full key
path so config typos fail loudly instead of silently using defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .networks import NetSpec
from .priors import MeanSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    k: int
    latent_dim: int
    factorization: str = "q1"
    means: MeanSpec = None
    learned_means: bool = False
    stddev: float = 1.0
    prior_probs: object = "uniform"  # "uniform" | "data_frequency" | explicit list
    net: NetSpec = NetSpec()


@dataclass(frozen=True)
class OptimConfig:
    max_steps: int
    batch_size: int = 100
    lr: float = 0.0002
    beta1: float = 0.5
    beta2: float = 0.999
    penalty_lambda: float = 10.0
    penalty_enabled: bool = True
    seed: int = 0


@dataclass(frozen=True)
class DataConfig:
    kind: str  # "synthetic" | "mnist" | "raw_rgb"
    train_images: str = None
    train_labels: str = None
    test_images: str = None
    test_labels: str = None
    components: int = 3
    per_component: int = 1000
    separation: float = 6.0
    dim: int = 2
    data_seed: int = 0
    val_count: int = 0
    labeled_count: int = 0
    stratified_labels: bool = False
    split_seed: int = 0


@dataclass(frozen=True)
class EvalConfig:
    assignment_mode: str = "optimal"
    cadence: int = 500
    checkpoint_cadence: int = 2000


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    optimization: OptimConfig
    data: DataConfig
    eval: EvalConfig


def _require_mapping(value, path):
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"{path}: expected a mapping")
    return dict(value)


class _Section:
    """Consumes keys from one mapping and complains about leftovers."""

    def __init__(self, mapping, path):
        self.mapping = dict(mapping)
        self.path = path

    def _key(self, name):
        return f"{self.path}.{name}" if self.path else name

    def take(self, name, kind, default=..., choices=None):
        if name not in self.mapping:
            if default is ...:
                raise ConfigError(f"missing required key {self._key(name)}")
            return default
        value = self.mapping.pop(name)
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if kind is not None and not isinstance(value, kind):
            raise ConfigError(
                f"{self._key(name)}: expected {getattr(kind, '__name__', kind)}, "
                f"got {type(value).__name__}"
            )
        if isinstance(value, bool) and kind in (int, float):
            raise ConfigError(f"{self._key(name)}: expected a number, got bool")
        if choices is not None and value not in choices:
            raise ConfigError(
                f"{self._key(name)}: must be one of {sorted(choices)}, got {value!r}"
            )
        return value

    def subsection(self, name):
        value = _require_mapping(self.mapping.pop(name, {}), self._key(name))
        return _Section(value, self._key(name))

    def finish(self):
        if self.mapping:
            key = sorted(self.mapping)[0]
            raise ConfigError(f"unknown key {self._key(key)}")


def _parse_means(sec: _Section, k: int, latent_dim: int) -> MeanSpec:
    kind = sec.take("kind", str, default="zeros",
                    choices={"zeros", "grid", "table", "random", "circle"})
    axes = sec.take("axes", list, default=None)
    seed = sec.take("seed", int, default=0)
    radius = sec.take("radius", float, default=6.0)
    scale = sec.take("scale", float, default=1.0)
    sec.finish()
    if kind == "grid":
        if axes is None:
            raise ConfigError("missing required key model.means.axes for grid means")
        axes = tuple(tuple(float(v) for v in axis) for axis in axes)
    else:
        axes = ()
    return MeanSpec(kind=kind, k=k, dim=latent_dim, axes=axes,
                    seed=seed, radius=radius, scale=scale)


def _parse_net(sec: _Section) -> NetSpec:
    kind = sec.take("kind", str, default="dense", choices={"dense", "conv"})
    hidden = sec.take("hidden", list, default=[256, 256])
    channels = sec.take("channels", list, default=[32, 64])
    activation = sec.take("activation", str, default="leaky_relu",
                          choices={"relu", "leaky_relu", "tanh"})
    sec.finish()
    return NetSpec(kind=kind, hidden=tuple(int(w) for w in hidden),
                   channels=tuple(int(c) for c in channels), activation=activation)


def parse_config(text: str, check_paths: bool = True) -> RunConfig:
    """Parse and validate a YAML run configuration."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark else ""
        raise ConfigError(f"config parse error{where}: {e}") from e
    root = _Section(_require_mapping(raw, ""), "")

    model_sec = root.subsection("model")
    k = model_sec.take("k", int)
    latent_dim = model_sec.take("latent_dim", int)
    if k < 2 or latent_dim < 1:
        raise ConfigError("model.k must be >= 2 and model.latent_dim >= 1")
    factorization = model_sec.take("factorization", str, default="q1",
                                   choices={"q1", "q2"})
    learned_means = model_sec.take("learned_means", bool, default=False)
    stddev = model_sec.take("stddev", float, default=1.0)
    if stddev <= 0:
        raise ConfigError("model.stddev must be positive")
    prior_probs = model_sec.take("prior_probs", (str, list), default="uniform")
    if isinstance(prior_probs, str) and prior_probs not in ("uniform", "data_frequency"):
        raise ConfigError(
            "model.prior_probs must be 'uniform', 'data_frequency', or a list"
        )
    if isinstance(prior_probs, list):
        prior_probs = tuple(float(p) for p in prior_probs)
        if len(prior_probs) != k:
            raise ConfigError(f"model.prior_probs must have {k} entries")
    means = _parse_means(model_sec.subsection("means"), k, latent_dim)
    net = _parse_net(model_sec.subsection("net"))
    model_sec.finish()
    model = ModelConfig(k=k, latent_dim=latent_dim, factorization=factorization,
                        means=means, learned_means=learned_means, stddev=stddev,
                        prior_probs=prior_probs, net=net)

    opt_sec = root.subsection("optimization")
    optim = OptimConfig(
        max_steps=opt_sec.take("max_steps", int),
        batch_size=opt_sec.take("batch_size", int, default=100),
        lr=opt_sec.take("lr", float, default=0.0002),
        beta1=opt_sec.take("beta1", float, default=0.5),
        beta2=opt_sec.take("beta2", float, default=0.999),
        penalty_lambda=opt_sec.take("penalty_lambda", float, default=10.0),
        penalty_enabled=opt_sec.take("penalty_enabled", bool, default=True),
        seed=opt_sec.take("seed", int, default=0),
    )
    opt_sec.finish()
    if optim.batch_size < 1 or optim.max_steps < 0:
        raise ConfigError("optimization.batch_size and max_steps must be positive")
    if optim.penalty_lambda < 0:
        raise ConfigError("optimization.penalty_lambda must be nonnegative")

    data_sec = root.subsection("data")
    kind = data_sec.take("kind", str, choices={"synthetic", "mnist", "raw_rgb"})
    data = DataConfig(
        kind=kind,
        train_images=data_sec.take("train_images", str, default=None),
        train_labels=data_sec.take("train_labels", str, default=None),
        test_images=data_sec.take("test_images", str, default=None),
        test_labels=data_sec.take("test_labels", str, default=None),
        components=data_sec.take("components", int, default=3),
        per_component=data_sec.take("per_component", int, default=1000),
        separation=data_sec.take("separation", float, default=6.0),
        dim=data_sec.take("dim", int, default=2),
        data_seed=data_sec.take("data_seed", int, default=0),
        val_count=data_sec.take("val_count", int, default=0),
        labeled_count=data_sec.take("labeled_count", int, default=0),
        stratified_labels=data_sec.take("stratified_labels", bool, default=False),
        split_seed=data_sec.take("split_seed", int, default=0),
    )
    data_sec.finish()
    if kind == "mnist" and (data.train_images is None or data.train_labels is None):
        raise ConfigError("data.train_images and data.train_labels required for mnist")
    if kind == "raw_rgb" and data.train_images is None:
        raise ConfigError("data.train_images required for raw_rgb")
    if check_paths:
        for name in ("train_images", "train_labels", "test_images", "test_labels"):
            value = getattr(data, name)
            if value is not None and not Path(value).exists():
                raise ConfigError(f"data.{name}: path {value!r} does not exist")

    eval_sec = root.subsection("eval")
    eval_cfg = EvalConfig(
        assignment_mode=eval_sec.take("assignment_mode", str, default="optimal",
                                      choices={"optimal", "majority"}),
        cadence=eval_sec.take("cadence", int, default=500),
        checkpoint_cadence=eval_sec.take("checkpoint_cadence", int, default=2000),
    )
    eval_sec.finish()
    root.finish()
    return RunConfig(model=model, optimization=optim, data=data, eval=eval_cfg)


def load_config(path, check_paths: bool = True) -> RunConfig:
    return parse_config(Path(path).read_text(), check_paths=check_paths)
