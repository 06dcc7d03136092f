"""Differentiable maps: encoders, decoder, discriminator, and their samplers.

All stochastic draws go through an explicit ``torch.Generator`` so runs
replay exactly from a seed. Samplers accept ``noise_scale`` so tests can
collapse them to their deterministic mean path (scale 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn

INIT_STD = 0.02


@dataclass(frozen=True)
class NetSpec:
    """Architecture plan shared by all five networks of a run.

    kind "dense": flatten the input and run it through `hidden` linear
    layers. kind "conv": stride-2 conv stack with `channels`, then dense
    layers of widths `hidden` (decoder mirrors it with transposed convs).
    """

    kind: str = "dense"
    hidden: tuple = (256, 256)
    channels: tuple = (32, 64)
    activation: str = "leaky_relu"

    def __post_init__(self):
        if self.kind not in ("dense", "conv"):
            raise ValueError(f"unknown net kind {self.kind!r}")
        if self.activation not in ("relu", "leaky_relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")


def _act(name: str) -> nn.Module:
    if name == "relu":
        return nn.ReLU()
    if name == "tanh":
        return nn.Tanh()
    return nn.LeakyReLU(0.2)


def _dense_stack(in_dim: int, widths, activation: str) -> tuple[nn.Sequential, int]:
    layers = []
    d = in_dim
    for w in widths:
        layers += [nn.Linear(d, w), _act(activation)]
        d = w
    return nn.Sequential(*layers), d


class _ConvFeatures(nn.Module):
    """Stride-2 conv stack; spatial dims must be divisible by 2**len(channels)."""

    def __init__(self, spec: NetSpec, in_shape):
        super().__init__()
        h, w, c = in_shape
        layers = []
        ch = c
        for out_ch in spec.channels:
            layers += [nn.Conv2d(ch, out_ch, 4, stride=2, padding=1), _act(spec.activation)]
            ch = out_ch
            h, w = h // 2, w // 2
        self.net = nn.Sequential(*layers)
        self.out_dim = ch * h * w

    def forward(self, x):
        # channel-last input to channel-first
        x = x.permute(0, 3, 1, 2)
        return self.net(x).flatten(1)


class GaussianEncoder(nn.Module):
    """Maps (x, optional cond) to a diagonal Gaussian (mu, log_sigma).

    Used both for the categorical-logit head q(y|x) (out_dim=K) and the
    continuous head q(z|x, .) (out_dim=L). `cond` is concatenated to the
    flattened features so gradients flow through it.
    """

    def __init__(self, spec: NetSpec, in_shape, cond_dim: int, out_dim: int):
        super().__init__()
        self.cond_dim = cond_dim
        if spec.kind == "conv":
            self.features = _ConvFeatures(spec, in_shape)
            feat_dim = self.features.out_dim
        else:
            self.features = nn.Flatten()
            feat_dim = int(torch.tensor(in_shape).prod())
        self.trunk, trunk_dim = _dense_stack(
            feat_dim + cond_dim, spec.hidden, spec.activation
        )
        self.mu_head = nn.Linear(trunk_dim, out_dim)
        # exp of a near-zero init gives sigma ~= 1 at the start
        self.log_sigma_head = nn.Linear(trunk_dim, out_dim)

    def forward(self, x, cond=None):
        feats = self.features(x)
        if self.cond_dim:
            if cond is None or cond.shape[1] != self.cond_dim:
                got = None if cond is None else tuple(cond.shape)
                raise ValueError(
                    f"encoder expects cond with {self.cond_dim} columns, got {got}"
                )
            feats = torch.cat([feats, cond], dim=1)
        elif cond is not None:
            raise ValueError("encoder built without conditioning input")
        h = self.trunk(feats)
        return self.mu_head(h), self.log_sigma_head(h)


class Decoder(nn.Module):
    """Maps (y, z) to a data batch squashed into `out_range` ([0,1] default)."""

    def __init__(self, spec: NetSpec, out_shape, k: int, latent_dim: int,
                 out_range=(0.0, 1.0)):
        super().__init__()
        self.out_shape = tuple(out_shape)
        self.kind = spec.kind
        self.out_low, self.out_high = float(out_range[0]), float(out_range[1])
        if not self.out_high > self.out_low:
            raise ValueError("decoder out_range must be increasing")
        in_dim = k + latent_dim
        if spec.kind == "conv":
            h, w, c = out_shape
            ch = spec.channels[-1]
            self.base_hw = (h // 4, w // 4)
            self.base_ch = ch
            self.trunk, trunk_dim = _dense_stack(in_dim, spec.hidden, spec.activation)
            self.project = nn.Linear(trunk_dim, ch * self.base_hw[0] * self.base_hw[1])
            mid = spec.channels[0]
            self.deconv = nn.Sequential(
                _act(spec.activation),
                nn.ConvTranspose2d(ch, mid, 4, stride=2, padding=1),
                _act(spec.activation),
                nn.ConvTranspose2d(mid, mid, 4, stride=2, padding=1),
                _act(spec.activation),
                nn.Conv2d(mid, c, 3, padding=1),
            )
        else:
            out_dim = 1
            for d in out_shape:
                out_dim *= int(d)
            self.trunk, trunk_dim = _dense_stack(in_dim, spec.hidden, spec.activation)
            self.head = nn.Linear(trunk_dim, out_dim)

    def forward(self, y, z):
        if y.shape[0] != z.shape[0]:
            raise ValueError("y and z batch sizes differ")
        h = self.trunk(torch.cat([y, z], dim=1))
        if self.kind == "conv":
            h = self.project(h).view(-1, self.base_ch, *self.base_hw)
            x = self.deconv(h).permute(0, 2, 3, 1)
        else:
            x = self.head(h).view(-1, *self.out_shape)
        return self.out_low + (self.out_high - self.out_low) * torch.sigmoid(x)


class Discriminator(nn.Module):
    """Scores joint triplets (x, y, z); output strictly inside (0,1)."""

    def __init__(self, spec: NetSpec, in_shape, k: int, latent_dim: int):
        super().__init__()
        if spec.kind == "conv":
            self.features = _ConvFeatures(spec, in_shape)
            feat_dim = self.features.out_dim
        else:
            self.features = nn.Flatten()
            feat_dim = int(torch.tensor(in_shape).prod())
        self.trunk, trunk_dim = _dense_stack(
            feat_dim + k + latent_dim, spec.hidden, spec.activation
        )
        self.head = nn.Linear(trunk_dim, 1)

    def forward(self, x, y, z):
        if not (x.shape[0] == y.shape[0] == z.shape[0]):
            raise ValueError("batch sizes of x, y, z differ")
        feats = self.features(x)
        h = self.trunk(torch.cat([feats, y, z], dim=1))
        return torch.sigmoid(self.head(h)).squeeze(1)


class PriorMeanGenerator(nn.Module):
    """Learnable per-component means: z(y) = y @ means + sigma * eps."""

    def __init__(self, k: int, latent_dim: int, init_means=None):
        super().__init__()
        if init_means is None:
            init = torch.zeros(k, latent_dim)
        else:
            init = torch.as_tensor(init_means, dtype=torch.float32).clone()
        self.means = nn.Parameter(init)

    def forward(self, y):
        return y @ self.means


def init_parameters(module: nn.Module, gen: torch.Generator) -> None:
    """Gaussian(0, 0.02) weights, zero biases, drawn from `gen`."""
    with torch.no_grad():
        for name, p in module.named_parameters():
            if name.endswith("bias"):
                p.zero_()
            elif name.endswith("means"):
                pass  # prior means keep their configured init
            else:
                p.normal_(0.0, INIT_STD, generator=gen)


def _gauss(mu, log_sigma, gen: torch.Generator, noise_scale: float):
    if noise_scale == 0.0:
        return mu
    eps = torch.randn(mu.shape, generator=gen, dtype=mu.dtype)
    return mu + noise_scale * torch.exp(log_sigma) * eps


def sample_inference_y(x, encoder_y: GaussianEncoder, gen, cond=None, noise_scale=1.0):
    """Draw (h_y, y): reparameterized logits followed by a softmax."""
    mu, log_sigma = encoder_y(x, cond)
    h_y = _gauss(mu, log_sigma, gen, noise_scale)
    return h_y, torch.softmax(h_y, dim=1)


def sample_inference_z(x, cond, encoder_z: GaussianEncoder, gen, noise_scale=1.0):
    """Draw z = mu(x, cond) + sigma(x, cond) * eps; cond may be None."""
    mu, log_sigma = encoder_z(x, cond)
    return _gauss(mu, log_sigma, gen, noise_scale)


def decode_x(y, z, decoder: Decoder):
    return decoder(y, z)


def discriminate(x, y, z, discriminator: Discriminator):
    return discriminator(x, y, z)
