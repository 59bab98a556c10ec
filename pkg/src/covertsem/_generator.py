"""Trainable generative prior G(s, n) with a standard normal latent space.

The generator is an upsampling conv decoder. After every upsampling stage a single-channel
noise map is added to the features, scaled by a learned per-channel strength, so
``n = 0`` recovers the deterministic path exactly.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any

import torch
from torch import nn

from ._codec import check_image
from ._errors import InvalidShape
from ._training import (
    TrainingLog,
    batches,
    check_finite,
    progress,
    seeded,
    snapshot,
)

logger = logging.getLogger(__name__)


def sample_latent(
    d_s: int, generator: torch.Generator, batch_size: int = 1
) -> torch.Tensor:
    """Draws ``batch_size`` latent codes s ~ N(0, I) of dimension ``d_s``."""
    if d_s < 1:
        raise InvalidShape(f"Latent dimension must be positive, got {d_s}")
    return torch.randn(batch_size, d_s, generator=generator)


def latent_log_prior(s: torch.Tensor) -> torch.Tensor:
    """Standard normal log-density log p(s) per sample."""
    d = s.shape[-1]
    return -0.5 * s.pow(2).sum(dim=-1) - 0.5 * d * math.log(2 * math.pi)


class _UpStage(nn.Module):
    def __init__(self, c_in: int, c_out: int) -> None:
        super().__init__()
        self.up = nn.Upsample(scale_factor=2, mode="nearest")
        self.conv = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.noise_strength = nn.Parameter(torch.full((1, c_out, 1, 1), 0.1))
        self.act = nn.SiLU()

    def forward(self, h: torch.Tensor, noise: torch.Tensor) -> torch.Tensor:
        h = self.conv(self.up(h))
        return self.act(h + self.noise_strength * noise)


class Generator(nn.Module):
    """G(s, n): latent code and per-layer noise to an image in [0, 1].

    Args:
        image_shape (tuple[int, int, int]): Output ``(C, H, W)``.
        d_s (int): Latent dimension. Defaults to 64.
        base_channels (int): Width of the first stage; halves every stage, floor 16.
        n_upsamples (int): Number of x2 upsampling stages; H and W must be divisible by
            ``2 ** n_upsamples``.
    """

    def __init__(
        self,
        image_shape: tuple[int, int, int] = (3, 64, 64),
        d_s: int = 64,
        base_channels: int = 128,
        n_upsamples: int = 4,
    ) -> None:
        super().__init__()
        c, h, w = image_shape
        scale = 2**n_upsamples
        if h % scale or w % scale:
            raise InvalidShape(
                f"Image {image_shape} is not divisible by 2**{n_upsamples}"
            )
        self.image_shape = tuple(image_shape)
        self.d_s = d_s
        self._init = {
            "image_shape": list(image_shape),
            "d_s": d_s,
            "base_channels": base_channels,
            "n_upsamples": n_upsamples,
        }
        self.start = (base_channels, h // scale, w // scale)
        self.project = nn.Linear(d_s, base_channels * self.start[1] * self.start[2])

        widths = [max(base_channels // 2**i, 16) for i in range(n_upsamples + 1)]
        self.stages = nn.ModuleList(
            _UpStage(widths[i], widths[i + 1]) for i in range(n_upsamples)
        )
        self.to_image = nn.Conv2d(widths[-1], c, 1)
        self.layer_noise_shapes = [
            (h // scale * 2 ** (i + 1), w // scale * 2 ** (i + 1))
            for i in range(n_upsamples)
        ]
        self.d_n = sum(a * b for a, b in self.layer_noise_shapes)

    @property
    def init_kwargs(self) -> dict[str, Any]:
        return dict(self._init)

    def split_noise(self, n: torch.Tensor) -> list[torch.Tensor]:
        sizes = [a * b for a, b in self.layer_noise_shapes]
        return [
            chunk.reshape(n.shape[0], 1, *shape)
            for chunk, shape in zip(n.split(sizes, dim=1), self.layer_noise_shapes)
        ]

    def forward(self, s: torch.Tensor, n: torch.Tensor | None = None) -> torch.Tensor:
        if s.dim() != 2 or s.shape[1] != self.d_s:
            raise InvalidShape(f"Expected latents (B, {self.d_s}), got {tuple(s.shape)}")
        if n is None:
            n = s.new_zeros(s.shape[0], self.d_n)
        if n.shape != (s.shape[0], self.d_n):
            raise InvalidShape(
                f"Expected noise (B, {self.d_n}), got {tuple(n.shape)}"
            )
        h = self.project(s).reshape(s.shape[0], *self.start)
        for stage, noise in zip(self.stages, self.split_noise(n)):
            h = stage(h, noise)
        return torch.sigmoid(self.to_image(h))

    def generate(self, s: torch.Tensor, n: torch.Tensor | None = None) -> torch.Tensor:
        """Alias of ``forward``; ``n=None`` means zero noise injection."""
        return self(s, n)

    def sample(self, batch_size: int, generator: torch.Generator) -> torch.Tensor:
        with torch.no_grad():
            return self(sample_latent(self.d_s, generator, batch_size))


class _PosteriorEncoder(nn.Module):
    """Amortised q(s | x) used only while training the generator."""

    def __init__(self, image_shape: tuple[int, int, int], d_s: int, width: int) -> None:
        super().__init__()
        c, h, w = image_shape
        self.net = nn.Sequential(
            nn.Conv2d(c, width, 4, stride=2, padding=1),
            nn.SiLU(),
            nn.Conv2d(width, width * 2, 4, stride=2, padding=1),
            nn.SiLU(),
            nn.Flatten(),
            nn.Linear(width * 2 * (h // 4) * (w // 4), 2 * d_s),
        )

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        mu, logvar = self.net(x).chunk(2, dim=1)
        return mu, logvar.clamp(-10.0, 10.0)


@dataclass
class GeneratorTrainConfig:
    image_shape: tuple[int, int, int] = (3, 64, 64)
    d_s: int = 64
    base_channels: int = 128
    n_upsamples: int = 4
    encoder_width: int = 32
    epochs: int = 60
    batch_size: int = 32
    lr: float = 1e-3
    likelihood_var: float = 0.01
    beta: float = 1.0


def train_generator(
    images: torch.Tensor,
    cfg: GeneratorTrainConfig,
    generator: torch.Generator,
    log: TrainingLog | None = None,
) -> Generator:
    """Trains G as the decoder of a variational autoencoder with a N(0, I) prior.

    Per-layer noise is sampled from N(0, I) during training, the way StyleGAN trains its
    noise inputs. Only the generator is returned; the posterior encoder is discarded.

    Raises:
        TrainingDiverged: If the evidence lower bound becomes non-finite.
    """
    log = log or TrainingLog("generator")
    check_image(images, cfg.image_shape)
    with seeded(generator):
        model = Generator(cfg.image_shape, cfg.d_s, cfg.base_channels, cfg.n_upsamples)
        posterior = _PosteriorEncoder(cfg.image_shape, cfg.d_s, cfg.encoder_width)
    params = list(model.parameters()) + list(posterior.parameters())
    optimizer = torch.optim.Adam(params, lr=cfg.lr)
    last_good = snapshot(model)

    for epoch in progress(range(cfg.epochs), desc="generator", total=cfg.epochs):
        model.train()
        totals = {"loss": 0.0, "recon": 0.0, "kl": 0.0}
        seen = 0
        for index in batches(len(images), cfg.batch_size, generator):
            x = images[index]
            mu, logvar = posterior(x)
            eps = torch.randn(mu.shape, generator=generator)
            s = mu + torch.exp(0.5 * logvar) * eps
            n = torch.randn(len(index), model.d_n, generator=generator)
            xhat = model(s, n)
            recon = (x - xhat).pow(2).flatten(1).sum(1) / (2 * cfg.likelihood_var)
            kl = -0.5 * (1 + logvar - mu.pow(2) - logvar.exp()).sum(1)
            loss = (recon + cfg.beta * kl).mean()
            check_finite(loss, stage="generator", epoch=epoch, last_good_state=last_good)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            totals["loss"] += float(loss.detach()) * len(index)
            totals["recon"] += float(recon.detach().sum())
            totals["kl"] += float(kl.detach().sum())
            seen += len(index)
        last_good = snapshot(model)
        log.record(epoch, **{k: v / max(seen, 1) for k, v in totals.items()})

    model.eval()
    return model
