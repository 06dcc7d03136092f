"""Adversarially learned mixture models for unsupervised and
semi-supervised clustering."""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_config, parse_config
from .data import Dataset, SplitSpec, make_synthetic_mixture
from .evaluate import (
    assign_cluster,
    cluster_matrix,
    clustering_error,
    infer_latents,
    latent_interpolate,
    reconstruct,
)
from .game import (
    PenaltyConfig,
    StepMetrics,
    TrainState,
    amm_train_step,
    build_train_state,
    discriminator_loss,
    generator_losses,
    gradient_penalty,
    samm_train_step,
)
from .networks import NetSpec
from .priors import (
    CategoricalPrior,
    MeanSpec,
    MixturePrior,
    bayes_classify,
    bayes_classify_batch,
    build_means,
    log_component_density,
    sample_categorical,
    sample_mixture_z,
)

__version__ = "0.1.0"
