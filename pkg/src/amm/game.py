"""Adversarial objectives and training steps.

Implements the unsupervised mixture-matching game, its semi-supervised
variant with a labeled inference path, and the input-gradient penalty on
random interpolates between the two joint samples. All players are
updated simultaneously: every gradient is computed against the pre-step
parameters before any optimizer applies its update.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .networks import (
    Decoder,
    Discriminator,
    GaussianEncoder,
    NetSpec,
    PriorMeanGenerator,
    init_parameters,
    sample_inference_y,
    sample_inference_z,
)
from .priors import CategoricalPrior, MixturePrior

PROB_CLAMP = 1e-7


class TrainingError(RuntimeError):
    """Raised when a step produces non-finite losses or parameters."""

    def __init__(self, message, metrics=None):
        super().__init__(message)
        self.metrics = metrics


@dataclass(frozen=True)
class PenaltyConfig:
    lam: float = 10.0
    enabled: bool = True

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("penalty weight must be nonnegative")


@dataclass
class StepMetrics:
    l_d: float
    l_enc: float
    l_dec: float
    penalty: float
    mean_rho_q: float
    mean_rho_p: float

    def is_finite(self) -> bool:
        return all(
            np.isfinite(v)
            for v in (
                self.l_d,
                self.l_enc,
                self.l_dec,
                self.penalty,
                self.mean_rho_q,
                self.mean_rho_p,
            )
        )


def _as_prob_vector(values) -> torch.Tensor:
    t = torch.atleast_1d(torch.as_tensor(values, dtype=torch.float64))
    if t.numel() == 0:
        raise ValueError("empty probability batch")
    return t.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)


def discriminator_loss(rho_q, rho_p) -> torch.Tensor:
    """-mean log(rho_q) - mean log(1 - rho_p), probabilities clamped."""
    rho_q = _as_prob_vector(rho_q)
    rho_p = _as_prob_vector(rho_p)
    return -torch.log(rho_q).mean() - torch.log(1.0 - rho_p).mean()


def generator_losses(rho_q, rho_p) -> tuple[torch.Tensor, torch.Tensor]:
    """(encoder loss, decoder loss): -mean log(1-rho_q), -mean log(rho_p)."""
    rho_q = _as_prob_vector(rho_q)
    rho_p = _as_prob_vector(rho_p)
    return -torch.log(1.0 - rho_q).mean(), -torch.log(rho_p).mean()


def gradient_penalty(
    discriminator: Discriminator,
    real_triplet,
    fake_triplet,
    cfg: PenaltyConfig,
    gen: torch.Generator,
) -> torch.Tensor:
    """lambda * mean[(||grad D at interpolates||_2 - 1)^2].

    One alpha ~ U(0,1) per example interpolates x, y, and z jointly; the
    norm is taken over the concatenation of all three input gradients.
    """
    if not cfg.enabled or cfg.lam == 0.0:
        return torch.zeros(())
    x_r, y_r, z_r = real_triplet
    x_f, y_f, z_f = fake_triplet
    m = x_r.shape[0]
    if x_f.shape[0] != m:
        raise ValueError("real and fake batches differ in size")
    alpha = torch.rand(m, generator=gen)
    interp = []
    for r, f in zip((x_r, y_r, z_r), (x_f, y_f, z_f)):
        a = alpha.view(m, *([1] * (r.dim() - 1)))
        interp.append((a * r + (1.0 - a) * f).detach().requires_grad_(True))
    score = discriminator(*interp)
    grads = torch.autograd.grad(score.sum(), interp, create_graph=True)
    flat = torch.cat([g.flatten(1) for g in grads], dim=1)
    norm = flat.norm(2, dim=1)
    return cfg.lam * ((norm - 1.0) ** 2).mean()


@dataclass
class TrainState:
    """All players of one run plus their optimizers and the latent prior."""

    encoder_y: GaussianEncoder
    encoder_z: GaussianEncoder
    decoder: Decoder
    discriminator: Discriminator
    prior_mean_gen: PriorMeanGenerator
    prior_probs: torch.Tensor
    prior_stddevs: torch.Tensor
    optimizers: dict
    penalty: PenaltyConfig
    batch_size: int
    factorization: str = "q1"
    learned_means: bool = False
    step: int = 0

    @property
    def num_components(self) -> int:
        return self.prior_probs.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.prior_mean_gen.means.shape[1]

    def modules(self) -> dict:
        return {
            "encoder_y": self.encoder_y,
            "encoder_z": self.encoder_z,
            "decoder": self.decoder,
            "discriminator": self.discriminator,
            "prior_mean_gen": self.prior_mean_gen,
        }

    def mixture_prior(self) -> MixturePrior:
        """Numpy-side view of the latent prior (live when means are learned)."""
        probs = self.prior_probs.numpy().astype(np.float64)
        return MixturePrior(
            CategoricalPrior(probs / probs.sum()),
            means=self.prior_mean_gen.means.detach().numpy().astype(np.float64),
            stddevs=self.prior_stddevs.numpy().astype(np.float64),
        )


def build_train_state(
    image_shape,
    k: int,
    latent_dim: int,
    net_spec: NetSpec,
    prior_means: np.ndarray,
    prior_probs: np.ndarray = None,
    prior_stddevs: np.ndarray = None,
    learned_means: bool = False,
    factorization: str = "q1",
    penalty: PenaltyConfig = PenaltyConfig(),
    batch_size: int = 100,
    lr: float = 0.0002,
    betas: tuple = (0.5, 0.999),
    init_gen: torch.Generator = None,
    decoder_range=(0.0, 1.0),
) -> TrainState:
    """Construct and initialize all networks and optimizers for one run."""
    if factorization not in ("q1", "q2"):
        raise ValueError(f"unknown factorization {factorization!r}")
    if init_gen is None:
        init_gen = torch.Generator().manual_seed(0)
    if factorization == "q1":
        # y from x alone, then z conditioned on the logits
        encoder_y = GaussianEncoder(net_spec, image_shape, 0, k)
        encoder_z = GaussianEncoder(net_spec, image_shape, k, latent_dim)
    else:
        # z from x alone, then y conditioned on z
        encoder_y = GaussianEncoder(net_spec, image_shape, latent_dim, k)
        encoder_z = GaussianEncoder(net_spec, image_shape, 0, latent_dim)
    decoder = Decoder(net_spec, image_shape, k, latent_dim, out_range=decoder_range)
    discriminator = Discriminator(net_spec, image_shape, k, latent_dim)
    prior_mean_gen = PriorMeanGenerator(k, latent_dim, prior_means)
    prior_mean_gen.means.requires_grad_(learned_means)
    for mod in (encoder_y, encoder_z, decoder, discriminator):
        init_parameters(mod, init_gen)

    if prior_probs is None:
        prior_probs = np.full(k, 1.0 / k)
    if prior_stddevs is None:
        prior_stddevs = np.ones((k, latent_dim))
    probs_t = torch.as_tensor(np.asarray(prior_probs), dtype=torch.float32)
    stddevs_t = torch.as_tensor(np.asarray(prior_stddevs), dtype=torch.float32)

    optimizers = {
        "discriminator": torch.optim.Adam(
            discriminator.parameters(), lr=lr, betas=betas
        ),
        "decoder": torch.optim.Adam(decoder.parameters(), lr=lr, betas=betas),
        "encoder_y": torch.optim.Adam(encoder_y.parameters(), lr=lr, betas=betas),
        "encoder_z": torch.optim.Adam(encoder_z.parameters(), lr=lr, betas=betas),
    }
    if learned_means:
        optimizers["prior_mean_gen"] = torch.optim.Adam(
            prior_mean_gen.parameters(), lr=lr, betas=betas
        )
    return TrainState(
        encoder_y=encoder_y,
        encoder_z=encoder_z,
        decoder=decoder,
        discriminator=discriminator,
        prior_mean_gen=prior_mean_gen,
        prior_probs=probs_t,
        prior_stddevs=stddevs_t,
        optimizers=optimizers,
        penalty=penalty,
        batch_size=batch_size,
        factorization=factorization,
        learned_means=learned_means,
    )


def sample_prior_latents(state: TrainState, m: int, gen: torch.Generator):
    """Draw (one-hot y, z) from the mixture prior; z keeps gradient to the means."""
    idx = torch.multinomial(
        state.prior_probs, m, replacement=True, generator=gen
    )
    y = torch.zeros(m, state.num_components)
    y[torch.arange(m), idx] = 1.0
    mu = state.prior_mean_gen(y)
    sigma = y @ state.prior_stddevs
    eps = torch.randn(mu.shape, generator=gen)
    return y, mu + sigma * eps


def sample_inference_latents(state: TrainState, x: torch.Tensor, gen, noise_scale=1.0):
    """Draw (h_y, y, z) from the inference path configured for the run."""
    if state.factorization == "q1":
        h_y, y = sample_inference_y(x, state.encoder_y, gen, noise_scale=noise_scale)
        z = sample_inference_z(x, h_y, state.encoder_z, gen, noise_scale=noise_scale)
    else:
        z = sample_inference_z(x, None, state.encoder_z, gen, noise_scale=noise_scale)
        h_y, y = sample_inference_y(
            x, state.encoder_y, gen, cond=z, noise_scale=noise_scale
        )
    return h_y, y, z


def _player_grads(state: TrainState, losses: dict) -> dict:
    """All gradients against the pre-step parameters; no update applied yet."""
    grads = {}
    names = list(losses)
    for i, name in enumerate(names):
        params = [p for p in state.modules()[name].parameters() if p.requires_grad]
        if not params:
            continue
        grads[name] = (
            params,
            torch.autograd.grad(
                losses[name],
                params,
                retain_graph=i < len(names) - 1,
                allow_unused=True,
            ),
        )
    return grads


def _apply_grads(state: TrainState, grads: dict) -> None:
    for name, (params, gs) in grads.items():
        for p, g in zip(params, gs):
            p.grad = torch.zeros_like(p) if g is None else g
        state.optimizers[name].step()
        for p in params:
            p.grad = None


def _scalar(t) -> float:
    return float(t.detach()) if hasattr(t, "detach") else float(t)


def _check_finite(state: TrainState, metrics: StepMetrics) -> None:
    if not metrics.is_finite():
        raise TrainingError(
            f"non-finite loss at step {state.step}: {metrics}", metrics
        )
    for name, mod in state.modules().items():
        for p in mod.parameters():
            if not torch.isfinite(p).all():
                raise TrainingError(
                    f"non-finite parameters in {name} after step {state.step}",
                    metrics,
                )


def amm_train_step(
    state: TrainState, x_batch: torch.Tensor, gen: torch.Generator
) -> StepMetrics:
    """One unsupervised simultaneous update of all players. Mutates `state`."""
    x = torch.as_tensor(x_batch, dtype=torch.float32)
    m = x.shape[0]
    if m != state.batch_size:
        raise ValueError(f"batch size {m} != configured {state.batch_size}")

    y_p, z_p = sample_prior_latents(state, m, gen)
    x_fake = state.decoder(y_p, z_p)
    h_y, y_q, z_q = sample_inference_latents(state, x, gen)

    rho_q = state.discriminator(x, y_q, z_q)
    rho_p = state.discriminator(x_fake, y_p, z_p)

    l_d = discriminator_loss(rho_q, rho_p)
    pen = gradient_penalty(
        state.discriminator, (x, y_p, z_p), (x_fake, y_q, z_q), state.penalty, gen
    )
    l_enc, l_dec = generator_losses(rho_q, rho_p)

    losses = {
        "discriminator": l_d + pen,
        "decoder": l_dec,
        "prior_mean_gen": l_dec,
        "encoder_y": l_enc,
        "encoder_z": l_enc,
    }
    grads = _player_grads(state, losses)
    _apply_grads(state, grads)

    metrics = StepMetrics(
        l_d=_scalar(l_d),
        l_enc=_scalar(l_enc),
        l_dec=_scalar(l_dec),
        penalty=_scalar(pen),
        mean_rho_q=_scalar(rho_q.mean()),
        mean_rho_p=_scalar(rho_p.mean()),
    )
    _check_finite(state, metrics)
    state.step += 1
    return metrics


def samm_train_step(
    state: TrainState,
    x_unlabeled: torch.Tensor,
    labeled: tuple,
    gen: torch.Generator,
) -> StepMetrics:
    """One semi-supervised simultaneous update. Mutates `state`.

    The labeled inference path uses the data labels directly (the
    categorical encoder sees no labeled gradient); both half-losses carry
    a 1/(2M) weight so their sum matches the unsupervised scale.
    """
    if state.factorization != "q1":
        raise ValueError("semi-supervised training requires the y-then-z path")
    x_u = torch.as_tensor(x_unlabeled, dtype=torch.float32)
    x_l, y_l_data = labeled
    x_l = torch.as_tensor(x_l, dtype=torch.float32)
    y_l_data = torch.as_tensor(y_l_data, dtype=torch.float32)
    m = x_u.shape[0]
    if x_l.shape[0] != m:
        raise ValueError("labeled and unlabeled batches must have equal size")
    if y_l_data.shape[1] != state.num_components:
        raise ValueError("labels must be one-hot over the mixture components")

    # unlabeled game
    y_pu, z_pu = sample_prior_latents(state, m, gen)
    x_fu = state.decoder(y_pu, z_pu)
    h_yu, y_qu, z_qu = sample_inference_latents(state, x_u, gen)
    rho_qu = state.discriminator(x_u, y_qu, z_qu)
    rho_pu = state.discriminator(x_fu, y_pu, z_pu)

    # labeled game: y observed, z inferred from (x, y)
    y_pl, z_pl = sample_prior_latents(state, m, gen)
    x_fl = state.decoder(y_pl, z_pl)
    z_ql = sample_inference_z(x_l, y_l_data, state.encoder_z, gen)
    rho_ql = state.discriminator(x_l, y_l_data, z_ql)
    rho_pl = state.discriminator(x_fl, y_pl, z_pl)

    l_d_u = 0.5 * discriminator_loss(rho_qu, rho_pu)
    l_d_l = 0.5 * discriminator_loss(rho_ql, rho_pl)
    pen_u = gradient_penalty(
        state.discriminator, (x_u, y_pu, z_pu), (x_fu, y_qu, z_qu), state.penalty, gen
    )
    pen_l = gradient_penalty(
        state.discriminator, (x_l, y_pl, z_pl), (x_fl, y_l_data, z_ql),
        state.penalty, gen,
    )
    pen = 0.5 * (pen_u + pen_l)

    l_enc_u, l_dec_u = generator_losses(rho_qu, rho_pu)
    l_enc_l, l_dec_l = generator_losses(rho_ql, rho_pl)
    l_enc_u, l_dec_u = 0.5 * l_enc_u, 0.5 * l_dec_u
    l_enc_l, l_dec_l = 0.5 * l_enc_l, 0.5 * l_dec_l

    losses = {
        "discriminator": l_d_u + l_d_l + pen,
        "decoder": l_dec_u + l_dec_l,
        "prior_mean_gen": l_dec_u + l_dec_l,
        "encoder_y": l_enc_u,
        "encoder_z": l_enc_u + l_enc_l,
    }
    grads = _player_grads(state, losses)
    _apply_grads(state, grads)

    metrics = StepMetrics(
        l_d=_scalar(l_d_u + l_d_l),
        l_enc=_scalar(l_enc_u + l_enc_l),
        l_dec=_scalar(l_dec_u + l_dec_l),
        penalty=_scalar(pen),
        mean_rho_q=_scalar(0.5 * (rho_qu.mean() + rho_ql.mean())),
        mean_rho_p=_scalar(0.5 * (rho_pu.mean() + rho_pl.mean())),
    )
    _check_finite(state, metrics)
    state.step += 1
    return metrics
