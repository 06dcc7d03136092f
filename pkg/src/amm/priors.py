"""Gaussian mixture latent prior: p(y) p(z|y).

The synthesis side of the model draws a component index y from a
multinomial prior and a continuous code z from a per-component diagonal
Gaussian. Means can be fixed (zeros, a regular grid, an explicit table)
or learned, in which case the means matrix is a live view owned by the
training loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SIGMA_FLOOR = 1e-4


class PriorError(ValueError):
    pass


@dataclass(frozen=True)
class CategoricalPrior:
    """Multinomial prior over K mixture components."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.shape[0] < 2:
            raise PriorError("probs must be a vector with K >= 2 entries")
        if np.any(probs < 0):
            raise PriorError("probs must be nonnegative")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise PriorError(f"probs must sum to 1, got {probs.sum()!r}")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def num_components(self) -> int:
        return self.probs.shape[0]

    @staticmethod
    def uniform(k: int) -> "CategoricalPrior":
        return CategoricalPrior(np.full(k, 1.0 / k))

    @staticmethod
    def from_labels(labels: np.ndarray, k: int) -> "CategoricalPrior":
        """Class probabilities set to the frequencies observed in `labels`."""
        counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=k)
        if counts.shape[0] != k:
            raise PriorError(f"labels exceed {k} classes")
        return CategoricalPrior(counts / counts.sum())


@dataclass
class MixturePrior:
    """Product p(y) p(z|y) with diagonal Gaussian components.

    When ``learned_means`` is True the means array is shared with the
    trainable prior-mean parameters; otherwise it is frozen here.
    """

    categorical: CategoricalPrior
    means: np.ndarray
    stddevs: np.ndarray = None
    learned_means: bool = False
    learned_stddevs: bool = False

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64)
        if self.means.ndim != 2:
            raise PriorError("means must be a K x L matrix")
        k = self.categorical.num_components
        if self.means.shape[0] != k:
            raise PriorError(
                f"means has {self.means.shape[0]} rows, prior has {k} components"
            )
        if self.stddevs is None:
            self.stddevs = np.ones_like(self.means)
        self.stddevs = np.maximum(
            np.asarray(self.stddevs, dtype=np.float64), SIGMA_FLOOR
        )
        if self.stddevs.shape != self.means.shape:
            raise PriorError("stddevs shape must match means shape")
        if not self.learned_means:
            self.means = self.means.copy()
            self.means.setflags(write=False)
        if not self.learned_stddevs:
            self.stddevs = self.stddevs.copy()
            self.stddevs.setflags(write=False)

    @property
    def num_components(self) -> int:
        return self.categorical.num_components

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def sample_categorical(
    prior: CategoricalPrior, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw `count` one-hot rows from the multinomial prior."""
    if count < 1:
        raise ValueError("count must be >= 1")
    k = prior.num_components
    idx = rng.choice(k, size=count, p=prior.probs)
    onehot = np.zeros((count, k), dtype=np.float64)
    onehot[np.arange(count), idx] = 1.0
    return onehot


def sample_mixture_z(
    prior: MixturePrior,
    y: np.ndarray,
    rng: np.random.Generator,
    noise_scale: float = 1.0,
) -> np.ndarray:
    """Reparameterized draw z = mu(y) + sigma(y) * eps for one-hot y rows.

    noise_scale=0 collapses the sampler to the exact component means.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2 or y.shape[1] != prior.num_components:
        raise PriorError(
            f"y must have {prior.num_components} columns, got shape {y.shape}"
        )
    if noise_scale == 0.0:
        return y @ prior.means
    eps = rng.standard_normal((y.shape[0], prior.dim))
    # y @ means selects the component row for one-hot y and stays linear in
    # the means, so gradients pass through when means are learned.
    return y @ prior.means + noise_scale * (y @ prior.stddevs) * eps


def log_component_density(prior: MixturePrior, z: np.ndarray, k: int) -> float:
    """log N(z; means[k], diag(stddevs[k]^2))."""
    if not 0 <= k < prior.num_components:
        raise IndexError(f"component {k} out of range [0, {prior.num_components})")
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (prior.dim,):
        raise PriorError(f"z must have length {prior.dim}, got shape {z.shape}")
    mu = prior.means[k]
    sigma = prior.stddevs[k]
    return float(
        -0.5 * prior.dim * math.log(2.0 * math.pi)
        - np.sum(np.log(sigma))
        - np.sum((z - mu) ** 2 / (2.0 * sigma**2))
    )


def bayes_classify(prior: MixturePrior, z: np.ndarray) -> int:
    """argmax_k log p(z|y=k) + log p(y=k); ties go to the lowest index."""
    with np.errstate(divide="ignore"):
        log_pi = np.log(prior.categorical.probs)
    scores = np.array(
        [log_component_density(prior, z, k) for k in range(prior.num_components)]
    )
    return int(np.argmax(scores + log_pi))


def bayes_classify_batch(prior: MixturePrior, z: np.ndarray) -> np.ndarray:
    """Vectorized bayes_classify over rows of an M x L matrix."""
    z = np.asarray(z, dtype=np.float64)
    with np.errstate(divide="ignore"):
        log_pi = np.log(prior.categorical.probs)
    # scores[i, k] = log N(z_i; mu_k, sigma_k) + log pi_k
    diff = z[:, None, :] - prior.means[None, :, :]
    quad = np.sum(diff**2 / (2.0 * prior.stddevs[None, :, :] ** 2), axis=2)
    log_norm = -0.5 * prior.dim * math.log(2.0 * math.pi) - np.sum(
        np.log(prior.stddevs), axis=1
    )
    scores = log_norm[None, :] - quad + log_pi[None, :]
    return np.argmax(scores, axis=1)


# -- mean placement ----------------------------------------------------------

# Fixed 10-component placement used for semi-supervised digit runs: four
# leading coordinates per component, zero-padded to the configured latent dim.
TABLE_MEANS_LEADING = np.array(
    [
        [-3, 3, -3, -3],
        [-3, -3, 3, 3],
        [-3, 3, 3, -3],
        [3, -3, -3, -3],
        [-3, -3, 3, -3],
        [3, -3, 3, -3],
        [3, 3, 3, -3],
        [-3, 3, 3, 3],
        [3, 3, -3, -3],
        [-3, -3, -3, -3],
    ],
    dtype=np.float64,
)


@dataclass(frozen=True)
class MeanSpec:
    """Descriptor for how the K x L mean matrix is constructed.

    kind:
      - "zeros": all-zero means.
      - "grid": cartesian product of per-axis coordinate lists, remaining
        coordinates zero. The product of axis lengths must equal K.
      - "table": the fixed 10-row placement, zero-padded to L.
      - "random": standard-normal init (seeded), for learned-mean runs.
      - "circle": K means evenly spaced on a circle of given radius in the
        first two coordinates (synthetic benchmarks).
    """

    kind: str
    k: int
    dim: int
    axes: tuple = ()
    seed: int = 0
    radius: float = 0.0
    scale: float = 1.0

    _KINDS = ("zeros", "grid", "table", "random", "circle")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise PriorError(f"unknown mean placement kind {self.kind!r}")


def build_means(spec: MeanSpec) -> np.ndarray:
    """Construct the K x L mean matrix described by `spec`."""
    k, dim = spec.k, spec.dim
    if spec.kind == "zeros":
        return np.zeros((k, dim))
    if spec.kind == "grid":
        axes = [np.asarray(a, dtype=np.float64) for a in spec.axes]
        n_points = int(np.prod([len(a) for a in axes]))
        if n_points != k:
            raise PriorError(
                f"grid produces {n_points} components but K={k} configured"
            )
        if len(axes) > dim:
            raise PriorError("more grid axes than latent dimensions")
        mesh = np.meshgrid(*axes, indexing="ij")
        means = np.zeros((k, dim))
        for i, m in enumerate(mesh):
            means[:, i] = m.reshape(-1)
        return means
    if spec.kind == "table":
        if k != TABLE_MEANS_LEADING.shape[0]:
            raise PriorError(
                f"table placement defines {TABLE_MEANS_LEADING.shape[0]} "
                f"components, K={k} configured"
            )
        lead = TABLE_MEANS_LEADING.shape[1]
        if dim < lead:
            raise PriorError(f"table placement needs dim >= {lead}")
        means = np.zeros((k, dim))
        means[:, :lead] = TABLE_MEANS_LEADING
        return means
    if spec.kind == "random":
        rng = np.random.default_rng(spec.seed)
        return spec.scale * rng.standard_normal((k, dim))
    if spec.kind == "circle":
        if dim < 2:
            raise PriorError("circle placement needs dim >= 2")
        angles = 2.0 * np.pi * np.arange(k) / k
        means = np.zeros((k, dim))
        means[:, 0] = spec.radius * np.cos(angles)
        means[:, 1] = spec.radius * np.sin(angles)
        return means
    raise PriorError(f"unknown mean placement kind {spec.kind!r}")


def svhn_unsupervised_grid(dim: int = 32) -> MeanSpec:
    """18-component grid: {-6,0,6} x {-6,0,6} x {-3,3}, zero padding."""
    return MeanSpec(
        kind="grid",
        k=18,
        dim=dim,
        axes=((-6.0, 0.0, 6.0), (-6.0, 0.0, 6.0), (-3.0, 3.0)),
    )
