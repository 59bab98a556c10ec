"""DeepJSCC-style semantic encoder/decoder and its end-to-end training over noisy channels."""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any, Protocol, runtime_checkable

import torch
from torch import nn

from ._channels import (
    ChannelFamily,
    ChannelSpec,
    pair_complex,
    power_normalize,
    receive,
    transmit,
    unpair_complex,
)
from ._errors import ConfigError, InvalidShape
from ._training import (
    TrainingLog,
    batches,
    check_finite,
    frozen,
    progress,
    seeded,
    snapshot,
)

logger = logging.getLogger(__name__)

ImageShape = tuple[int, int, int]
SpecSampler = Callable[[torch.Generator], ChannelSpec]


@runtime_checkable
class FeatureExtractor(Protocol):
    """Anything exposing intermediate feature maps, e.g. the identity backbone."""

    def features(self, x: torch.Tensor) -> list[torch.Tensor]: ...


def check_image(x: torch.Tensor, image_shape: Sequence[int]) -> None:
    if x.dim() != 4 or tuple(x.shape[1:]) != tuple(image_shape):
        raise InvalidShape(
            f"Expected images of shape (B, {', '.join(map(str, image_shape))}), "
            f"got {tuple(x.shape)}"
        )


def bandwidth(image_shape: Sequence[int], bcr: float) -> int:
    """Number of complex channel symbols k = round(N·BCR)."""
    n = image_shape[0] * image_shape[1] * image_shape[2]
    k = round(n * bcr)
    if k < 1:
        raise ConfigError(f"BCR {bcr} leaves no channel symbols for N={n}")
    return k


def _same(kernel: int) -> int:
    return (kernel - 1) // 2


class Encoder(nn.Module):
    """Strided conv stack ending in a 2k-wide real head."""

    def __init__(
        self,
        image_shape: ImageShape,
        k: int,
        channels: tuple[int, int],
        kernel_sizes: tuple[int, int, int],
    ) -> None:
        super().__init__()
        c, h, w = image_shape
        c1, c2 = channels
        k0, k1, k2 = kernel_sizes
        self.trunk = nn.Sequential(
            nn.Conv2d(c, c1, k0, stride=2, padding=_same(k0)),
            nn.PReLU(),
            nn.Conv2d(c1, c2, k1, stride=2, padding=_same(k1)),
            nn.PReLU(),
            nn.Conv2d(c2, c2, k2, stride=1, padding=_same(k2)),
            nn.PReLU(),
        )
        cells = (h // 4) * (w // 4)
        if (2 * k) % cells == 0:
            self.grid = (2 * k // cells, h // 4, w // 4)
            self.head: nn.Module = nn.Conv2d(c2, self.grid[0], k2, padding=_same(k2))
        else:
            self.grid = (2, 1, k)
            self.head = nn.Sequential(nn.Flatten(), nn.Linear(c2 * cells, 2 * k))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.trunk(x)).flatten(1)


class Decoder(nn.Module):
    """Mirror of :class:`Encoder`: 2k reals in, image in [0, 1] out."""

    def __init__(
        self,
        image_shape: ImageShape,
        k: int,
        channels: tuple[int, int],
        kernel_sizes: tuple[int, int, int],
    ) -> None:
        super().__init__()
        c, h, w = image_shape
        c1, c2 = channels
        k0, k1, k2 = kernel_sizes
        cells = (h // 4) * (w // 4)
        self.latent = (c2, h // 4, w // 4)
        if (2 * k) % cells == 0:
            grid_c = 2 * k // cells
            self.head: nn.Module = nn.Sequential(
                nn.Unflatten(1, (grid_c, h // 4, w // 4)),
                nn.ConvTranspose2d(grid_c, c2, k2, padding=_same(k2)),
            )
        else:
            self.head = nn.Sequential(
                nn.Linear(2 * k, c2 * cells), nn.Unflatten(1, self.latent)
            )
        self.body = nn.Sequential(
            nn.PReLU(),
            nn.ConvTranspose2d(c2, c2, k2, padding=_same(k2)),
            nn.PReLU(),
            nn.ConvTranspose2d(
                c2, c1, k1, stride=2, padding=_same(k1), output_padding=1
            ),
            nn.PReLU(),
            nn.ConvTranspose2d(
                c1, c, k0, stride=2, padding=_same(k0), output_padding=1
            ),
            nn.Sigmoid(),
        )

    def forward(self, reals: torch.Tensor) -> torch.Tensor:
        return self.body(self.head(reals))


class SemanticCodec(nn.Module):
    """Semantic encoder θ1 and decoder θ2 sharing one image shape and BCR.

    Args:
        image_shape (tuple[int, int, int]): ``(C, H, W)``; H and W must be multiples of 4.
        bcr (float): Bandwidth compression ratio k/N. Defaults to 1/12.
        channels (tuple[int, int]): Hidden conv widths.
        kernel_sizes (tuple[int, int, int]): Kernel sizes of the three conv stages.
        pbar (float): Average transmit power enforced on every encoder output.
    """

    def __init__(
        self,
        image_shape: ImageShape = (3, 64, 64),
        bcr: float = 1 / 12,
        channels: tuple[int, int] = (32, 64),
        kernel_sizes: tuple[int, int, int] = (9, 5, 5),
        pbar: float = 1.0,
    ) -> None:
        super().__init__()
        image_shape = tuple(image_shape)  # type: ignore[assignment]
        if image_shape[1] % 4 or image_shape[2] % 4:
            raise InvalidShape(f"Image height/width must be multiples of 4: {image_shape}")
        self.image_shape = image_shape
        self.bcr = bcr
        self.k = bandwidth(image_shape, bcr)
        self.pbar = pbar
        self._init = {
            "image_shape": list(image_shape),
            "bcr": bcr,
            "channels": list(channels),
            "kernel_sizes": list(kernel_sizes),
            "pbar": pbar,
        }
        self.encoder = Encoder(image_shape, self.k, tuple(channels), tuple(kernel_sizes))  # type: ignore[arg-type]
        self.decoder = Decoder(image_shape, self.k, tuple(channels), tuple(kernel_sizes))  # type: ignore[arg-type]

    @property
    def init_kwargs(self) -> dict[str, Any]:
        return dict(self._init)

    @property
    def signal_grid(self) -> tuple[int, int, int]:
        """Shape the real view of a channel signal takes before the encoder flattens it."""
        return self.encoder.grid

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        """Maps images ``(B, C, H, W)`` to power-normalized complex signals ``(B, k)``."""
        check_image(x, self.image_shape)
        return power_normalize(pair_complex(self.encoder(x)), self.pbar)

    def decode(self, zhat: torch.Tensor) -> torch.Tensor:
        """Maps received complex signals ``(B, k)`` back to images in [0, 1]."""
        if zhat.dim() != 2 or zhat.shape[-1] != self.k:
            raise InvalidShape(
                f"Expected a signal of shape (B, {self.k}), got {tuple(zhat.shape)}"
            )
        return self.decoder(unpair_complex(zhat))

    def forward(
        self,
        x: torch.Tensor,
        spec: ChannelSpec,
        generator: torch.Generator | None = None,
    ) -> torch.Tensor:
        """Full legitimate link: encode, channel, receiver front end, decode."""
        out = transmit(self.encode(x), spec, generator)
        return self.decode(receive(out, spec))


@dataclass
class CodecLossConfig:
    lambda_pix: float = 1.0
    lambda_perc: float = 0.1
    layer_weights: tuple[float, ...] | None = None
    feature_net: FeatureExtractor | None = field(
        default=None, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        if self.lambda_pix < 0 or self.lambda_perc < 0:
            raise ConfigError("Loss weights must be non-negative")
        if self.lambda_pix + self.lambda_perc <= 0:
            raise ConfigError("At least one of lambda_pix, lambda_perc must be positive")


def feature_weights(n_layers: int, weights: Sequence[float] | None) -> list[float]:
    if weights is None:
        return [1.0 / n_layers] * n_layers
    if len(weights) != n_layers:
        raise InvalidShape(
            f"Got {len(weights)} layer weights for {n_layers} feature layers"
        )
    return list(weights)


def composite_loss(
    x: torch.Tensor, xhat: torch.Tensor, cfg: CodecLossConfig
) -> torch.Tensor:
    """Pixel-level MSE plus layer-weighted perceptual feature loss, averaged over the batch."""
    if x.shape != xhat.shape:
        raise InvalidShape(f"Shape mismatch: {tuple(x.shape)} vs {tuple(xhat.shape)}")
    loss = cfg.lambda_pix * (x - xhat).pow(2).flatten(1).mean(dim=1)
    if cfg.lambda_perc > 0 and cfg.feature_net is not None:
        with torch.no_grad():
            targets = cfg.feature_net.features(x)
        estimates = cfg.feature_net.features(xhat)
        weights = feature_weights(len(targets), cfg.layer_weights)
        perceptual = torch.zeros_like(loss)
        for weight, y, y_hat in zip(weights, targets, estimates):
            # Sum over channels, mean over the H_l x W_l positions.
            perceptual = perceptual + (weight * (y - y_hat)).pow(2).sum(dim=1).flatten(
                1
            ).mean(dim=1)
        loss = loss + cfg.lambda_perc * perceptual
    return loss.mean()


@dataclass
class CodecTrainConfig:
    image_shape: tuple[int, int, int] = (3, 64, 64)
    bcr: float = 1 / 12
    channels: tuple[int, int] = (32, 64)
    kernel_sizes: tuple[int, int, int] = (9, 5, 5)
    pbar: float = 1.0
    family: ChannelFamily = ChannelFamily.AWGN
    snr_low_db: float = 0.0
    snr_high_db: float = 20.0
    epochs: int = 40
    batch_size: int = 32
    lr: float = 1e-3
    loss: CodecLossConfig = field(default_factory=CodecLossConfig)


def train_codec(
    images: torch.Tensor,
    spec_sampler: SpecSampler,
    cfg: CodecTrainConfig,
    generator: torch.Generator,
    log: TrainingLog | None = None,
    validation: torch.Tensor | None = None,
) -> SemanticCodec:
    """Trains encoder and decoder jointly with channel noise inside the graph.

    Args:
        images (torch.Tensor): Training images ``(M, C, H, W)``.
        spec_sampler (SpecSampler): Draws the channel spec of every batch.
        cfg (CodecTrainConfig): Architecture and optimisation settings.
        generator (torch.Generator): RNG for initialisation, shuffling and the channel.
        log (TrainingLog | None): Receives one row per epoch.
        validation (torch.Tensor | None): Held-out images; when given, their PSNR at
            the top of the SNR range is logged every epoch.

    Returns:
        SemanticCodec: The trained codec in eval mode.

    Raises:
        TrainingDiverged: If the loss becomes non-finite.
    """
    from ._metrics import psnr

    log = log or TrainingLog("codec")
    with seeded(generator):
        codec = SemanticCodec(
            cfg.image_shape, cfg.bcr, cfg.channels, cfg.kernel_sizes, cfg.pbar
        )
    check_image(images, codec.image_shape)
    optimizer = torch.optim.Adam(codec.parameters(), lr=cfg.lr)
    last_good = snapshot(codec)

    with frozen(cfg.loss.feature_net):
        for epoch in progress(range(cfg.epochs), desc="codec", total=cfg.epochs):
            codec.train()
            total, seen = 0.0, 0
            for index in batches(len(images), cfg.batch_size, generator):
                x = images[index]
                spec = spec_sampler(generator)
                xhat = codec(x, spec, spec.generator())
                loss = composite_loss(x, xhat, cfg.loss)
                check_finite(loss, stage="codec", epoch=epoch, last_good_state=last_good)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                total += float(loss.detach()) * len(index)
                seen += len(index)

            last_good = snapshot(codec)
            row = {"loss": total / max(seen, 1)}
            if validation is not None and len(validation):
                codec.eval()
                with torch.no_grad():
                    spec = ChannelSpec(cfg.family, cfg.snr_high_db, cfg.pbar)
                    xhat = codec(validation, spec, spec.generator())
                    row["val_psnr"] = float(psnr(validation, xhat).mean())
            log.record(epoch, **row)

    codec.eval()
    return codec


def mean_image_baseline(images: torch.Tensor) -> torch.Tensor:
    """The dataset mean image broadcast to the batch, the no-information reconstruction."""
    return images.mean(dim=0, keepdim=True).expand_as(images)


def reconstruct(
    codec: SemanticCodec,
    images: torch.Tensor,
    spec: ChannelSpec,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Inference-mode legitimate-link reconstruction."""
    codec.eval()
    with torch.no_grad():
        return codec(images, spec, generator)
