"""Invertible signal steganography: hide a private channel signal inside a host signal.

The container has the same length as either input, so the bandwidth ratio of the link is
unchanged. The hidden-branch output (the "lost" signal) stays with the sender; the
receiver substitutes an estimate for it when inverting. The trained module's state dict
is the secret shared between sender and receiver.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import torch
from torch import nn

from ._channels import (
    ChannelSpec,
    pair_complex,
    power_normalize,
    receive,
    transmit,
    unpair_complex,
)
from ._codec import SemanticCodec, SpecSampler
from ._errors import ConfigError, InvalidShape, NumericalError
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


class CouplingNet(nn.Module):
    """conv3x3 -> LeakyReLU -> conv3x3 with a zero-initialised output layer.

    With ``bound`` set, the output is squashed to ``bound * tanh(out / bound)``, which
    keeps the slope at zero equal to one.
    """

    def __init__(self, channels: int, hidden: int = 32, bound: float | None = None) -> None:
        super().__init__()
        self.bound = bound
        self.net = nn.Sequential(
            nn.Conv2d(channels, hidden, 3, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(hidden, channels, 3, padding=1),
        )
        nn.init.zeros_(self.net[-1].weight)
        nn.init.zeros_(self.net[-1].bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.net(x)
        if self.bound is None:
            return out
        return self.bound * torch.tanh(out / self.bound)


def _check_finite(*tensors: torch.Tensor) -> None:
    for t in tensors:
        if not bool(torch.isfinite(t).all()):
            raise NumericalError("Invertible block produced non-finite values")


class InvertibleBlock(nn.Module):
    """Affine coupling block over a (host, private) pair of grid tensors.

    Forward::

        zh' = zh + phi(zp)
        zp' = zp * exp(alpha * tanh(rho(zh'))) + eta(zh')

    The inverse is exact for any coupling networks. ``phi`` and ``eta`` are bounded by
    ``coupling_bound`` so intermediate magnitudes stay small across a deep stack.
    """

    def __init__(
        self,
        channels: int,
        hidden: int = 32,
        clamp_alpha: float = 2.0,
        coupling_bound: float | None = 2.0,
    ) -> None:
        super().__init__()
        self.clamp_alpha = clamp_alpha
        self.phi = CouplingNet(channels, hidden, coupling_bound)
        self.rho = CouplingNet(channels, hidden)
        self.eta_coupling = CouplingNet(channels, hidden, coupling_bound)

    def _log_scale(self, zh_next: torch.Tensor) -> torch.Tensor:
        return self.clamp_alpha * torch.tanh(self.rho(zh_next))

    def forward(
        self, zh: torch.Tensor, zp: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        zh_next = zh + self.phi(zp)
        zp_next = zp * torch.exp(self._log_scale(zh_next)) + self.eta_coupling(zh_next)
        _check_finite(zh_next, zp_next)
        return zh_next, zp_next

    def inverse(
        self, zh_next: torch.Tensor, zp_next: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        zp = (zp_next - self.eta_coupling(zh_next)) * torch.exp(
            -self._log_scale(zh_next)
        )
        zh = zh_next - self.phi(zp)
        _check_finite(zh, zp)
        return zh, zp


def inn_block_forward(
    zh: torch.Tensor, zp: torch.Tensor, block: InvertibleBlock
) -> tuple[torch.Tensor, torch.Tensor]:
    if zh.shape != zp.shape:
        raise InvalidShape(f"Shape mismatch: {tuple(zh.shape)} vs {tuple(zp.shape)}")
    return block(zh, zp)


def inn_block_backward(
    zh_next: torch.Tensor, zp_next: torch.Tensor, block: InvertibleBlock
) -> tuple[torch.Tensor, torch.Tensor]:
    if zh_next.shape != zp_next.shape:
        raise InvalidShape(
            f"Shape mismatch: {tuple(zh_next.shape)} vs {tuple(zp_next.shape)}"
        )
    return block.inverse(zh_next, zp_next)


@dataclass
class StegPacket:
    """Output of :func:`steg_embed`.

    ``container`` is power-normalised and goes on the air; ``container_raw`` is the
    last block's host branch before normalisation; ``lost`` never leaves the sender.
    """

    container: torch.Tensor
    container_raw: torch.Tensor
    lost: torch.Tensor


class SignalSteganography(nn.Module):
    """Stack of invertible blocks acting on channel signals viewed as feature grids.

    Args:
        grid_shape (tuple[int, int, int]): ``(C', H', W')`` with ``C'·H'·W' = 2k``,
            normally :attr:`SemanticCodec.signal_grid`.
        n_blocks (int): Number of invertible blocks. Defaults to 8.
        hidden (int): Width of the coupling networks.
        clamp_alpha (float): Bound of the log-scale.
        pbar (float): Power the container is renormalised to.
        coupling_bound (float | None): Bound of the additive couplings.
        precision (str): Dtype the blocks compute in. Signals are cast to it on entry
            and back to their own precision on exit, so the float32 round trip stays
            exact to well below 1e-4 even through eight untrained blocks.
    """

    def __init__(
        self,
        grid_shape: tuple[int, int, int],
        n_blocks: int = 8,
        hidden: int = 32,
        clamp_alpha: float = 2.0,
        pbar: float = 1.0,
        coupling_bound: float | None = 2.0,
        precision: str = "float64",
    ) -> None:
        super().__init__()
        if grid_shape[0] * grid_shape[1] * grid_shape[2] % 2:
            raise InvalidShape(f"Grid {grid_shape} does not hold a whole complex signal")
        self.grid_shape = tuple(grid_shape)
        self.k = grid_shape[0] * grid_shape[1] * grid_shape[2] // 2
        self.pbar = pbar
        self._init = {
            "grid_shape": list(grid_shape),
            "n_blocks": n_blocks,
            "hidden": hidden,
            "clamp_alpha": clamp_alpha,
            "pbar": pbar,
            "coupling_bound": coupling_bound,
            "precision": precision,
        }
        self.blocks = nn.ModuleList(
            InvertibleBlock(grid_shape[0], hidden, clamp_alpha, coupling_bound)
            for _ in range(n_blocks)
        )
        dtype = getattr(torch, precision, None)
        if not isinstance(dtype, torch.dtype) or not dtype.is_floating_point:
            raise ConfigError(f"precision must name a floating dtype, got {precision!r}")
        self.to(dtype)

    @property
    def init_kwargs(self) -> dict:
        return dict(self._init)

    @property
    def compute_dtype(self) -> torch.dtype:
        param = next(self.parameters(), None)
        return param.dtype if param is not None else getattr(torch, self._init["precision"])

    def to_grid(self, z: torch.Tensor) -> torch.Tensor:
        if z.dim() != 2 or z.shape[-1] != self.k:
            raise InvalidShape(f"Expected a signal of shape (B, {self.k}), got {tuple(z.shape)}")
        return unpair_complex(z).reshape(z.shape[0], *self.grid_shape)

    def from_grid(self, g: torch.Tensor, dtype: torch.dtype | None = None) -> torch.Tensor:
        return pair_complex(g.flatten(1).to(dtype or g.dtype))

    def embed(self, z_h: torch.Tensor, z_p: torch.Tensor) -> StegPacket:
        if z_h.shape != z_p.shape:
            raise InvalidShape(
                f"Host and private signals differ: {tuple(z_h.shape)} vs {tuple(z_p.shape)}"
            )
        zh, zp = self.to_grid(z_h), self.to_grid(z_p)
        dtype = zh.dtype
        zh, zp = zh.to(self.compute_dtype), zp.to(self.compute_dtype)
        for block in self.blocks:
            zh, zp = inn_block_forward(zh, zp, block)
        raw = self.from_grid(zh, dtype)
        return StegPacket(
            container=power_normalize(raw, self.pbar),
            container_raw=raw,
            lost=self.from_grid(zp, dtype),
        )

    def extract(
        self, zc_hat: torch.Tensor, lhat: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        if zc_hat.shape != lhat.shape:
            raise InvalidShape(
                f"Container and lost estimate differ: {tuple(zc_hat.shape)} vs {tuple(lhat.shape)}"
            )
        zh, zp = self.to_grid(zc_hat), self.to_grid(lhat)
        dtype = zh.dtype
        zh, zp = zh.to(self.compute_dtype), zp.to(self.compute_dtype)
        for block in reversed(self.blocks):
            zh, zp = inn_block_backward(zh, zp, block)
        return self.from_grid(zh, dtype), self.from_grid(zp, dtype)


def steg_embed(
    z_h: torch.Tensor, z_p: torch.Tensor, steg: SignalSteganography
) -> StegPacket:
    """Hides ``z_p`` in ``z_h``; see :meth:`SignalSteganography.embed`."""
    return steg.embed(z_h, z_p)


def steg_extract(
    zc_hat: torch.Tensor, lhat: torch.Tensor, steg: SignalSteganography
) -> tuple[torch.Tensor, torch.Tensor]:
    """Recovers ``(z_h, z_p)`` estimates from a received container."""
    return steg.extract(zc_hat, lhat)


class LostEstimate(str, Enum):
    ZERO_CONSTANT = "zero_constant"
    GAUSSIAN_SAMPLE = "gaussian_sample"


def estimate_lost(
    like: torch.Tensor,
    mode: LostEstimate | str,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """The receiver's stand-in for the lost signal: zeros, or a CN(0, 1) draw."""
    mode = LostEstimate(mode)
    if mode is LostEstimate.GAUSSIAN_SAMPLE:
        sample = torch.randn(like.shape, dtype=like.dtype, generator=generator)
        return sample.to(like.device)
    return torch.zeros_like(like)


@dataclass
class StegLossConfig:
    """Weights of the container, lost, private, host and pixel terms."""

    lambda1: float = 1.0
    lambda2: float = 2.0
    lambda3: float = 2.0
    lambda4: float = 1.0
    lambda5: float = 1.0
    lhat_mode: LostEstimate = LostEstimate.ZERO_CONSTANT

    def __post_init__(self) -> None:
        self.lhat_mode = LostEstimate(self.lhat_mode)
        weights = self.weights
        if not all(math.isfinite(w) and w >= 0 for w in weights):
            raise ConfigError(f"Loss weights must be finite and non-negative: {weights}")
        if not any(w > 0 for w in weights):
            raise ConfigError("At least one loss weight must be positive")

    @property
    def weights(self) -> tuple[float, float, float, float, float]:
        return (self.lambda1, self.lambda2, self.lambda3, self.lambda4, self.lambda5)


@dataclass
class StegLosses:
    forward: torch.Tensor
    backward: torch.Tensor
    privacy: torch.Tensor
    total: torch.Tensor
    terms: dict[str, torch.Tensor] = field(default_factory=dict)


def _mse(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return (a - b).abs().pow(2).mean()


def steg_losses(
    x_h: torch.Tensor,
    x_p: torch.Tensor,
    codec: SemanticCodec,
    steg: SignalSteganography,
    cfg: StegLossConfig,
    spec: ChannelSpec,
    generator: torch.Generator | None = None,
) -> StegLosses:
    """Forward, backward and privacy losses of one host/private batch.

    The container passes through the channel of ``spec`` (noise drawn from
    ``spec.generator()``); ``generator`` only drives the lost-signal estimate. Every
    squared norm is a per-element mean.
    """
    z_h = codec.encode(x_h)
    z_p = codec.encode(x_p)
    packet = steg.embed(z_h, z_p)
    lhat = estimate_lost(packet.lost, cfg.lhat_mode, generator)
    zc_hat = receive(transmit(packet.container, spec, spec.generator()), spec)
    zh_hat, zp_hat = steg.extract(zc_hat, lhat)
    xp_hat = codec.decode(zp_hat)

    terms = {
        "container": _mse(packet.container, z_h),
        "lost": _mse(packet.lost, lhat),
        "private": _mse(z_p, zp_hat),
        "host": _mse(z_h, zh_hat),
        "pixel": _mse(x_p, xp_hat),
    }
    l1, l2, l3, l4, l5 = cfg.weights
    forward = l1 * terms["container"] + l2 * terms["lost"]
    backward = l3 * terms["private"] + l4 * terms["host"]
    privacy = l5 * terms["pixel"]
    return StegLosses(
        forward=forward,
        backward=backward,
        privacy=privacy,
        total=forward + backward + privacy,
        terms=terms,
    )


@dataclass
class StegTrainConfig:
    n_blocks: int = 8
    hidden: int = 32
    clamp_alpha: float = 2.0
    coupling_bound: float | None = 2.0
    n_pairs: int = 1000
    epochs: int = 30
    batch_size: int = 128
    lr: float = 3e-4
    loss: StegLossConfig = field(default_factory=StegLossConfig)


def sample_pairs(
    n_images: int, n_pairs: int, generator: torch.Generator
) -> tuple[torch.Tensor, torch.Tensor]:
    """Uniform random (host, private) index pairs with host != private."""
    if n_images < 2:
        raise InvalidShape("Need at least two images to form host/private pairs")
    host = torch.randint(0, n_images, (n_pairs,), generator=generator)
    offset = torch.randint(1, n_images, (n_pairs,), generator=generator)
    return host, (host + offset) % n_images


def train_steganography(
    images: torch.Tensor,
    codec: SemanticCodec,
    cfg: StegTrainConfig,
    spec_sampler: SpecSampler,
    generator: torch.Generator,
    log: TrainingLog | None = None,
) -> SignalSteganography:
    """Trains the invertible blocks with the codec frozen and the channel in the loop.

    Raises:
        TrainingDiverged: If the total loss becomes non-finite.
    """
    log = log or TrainingLog("steganography")
    with seeded(generator):
        steg = SignalSteganography(
            codec.signal_grid,
            cfg.n_blocks,
            cfg.hidden,
            cfg.clamp_alpha,
            codec.pbar,
            coupling_bound=cfg.coupling_bound,
        )
    host_idx, private_idx = sample_pairs(len(images), cfg.n_pairs, generator)
    optimizer = torch.optim.Adam(steg.parameters(), lr=cfg.lr)
    last_good = snapshot(steg)

    with frozen(codec):
        for epoch in progress(range(cfg.epochs), desc="steganography", total=cfg.epochs):
            steg.train()
            sums = {"forward": 0.0, "backward": 0.0, "privacy": 0.0, "total": 0.0}
            seen = 0
            for index in batches(cfg.n_pairs, cfg.batch_size, generator):
                spec = spec_sampler(generator)
                losses = steg_losses(
                    images[host_idx[index]],
                    images[private_idx[index]],
                    codec,
                    steg,
                    cfg.loss,
                    spec,
                    generator,
                )
                check_finite(
                    losses.total,
                    stage="steganography",
                    epoch=epoch,
                    last_good_state=last_good,
                )
                optimizer.zero_grad()
                losses.total.backward()
                optimizer.step()
                for name in sums:
                    sums[name] += float(getattr(losses, name).detach()) * len(index)
                seen += len(index)
            last_good = snapshot(steg)
            log.record(epoch, **{k: v / max(seen, 1) for k, v in sums.items()})

    steg.eval()
    return steg


@dataclass
class CovertTransmission:
    """One defended transmission as seen by the receiver and by an eavesdropper."""

    container: torch.Tensor
    host_hat: torch.Tensor
    private_hat: torch.Tensor


def covert_link(
    x_h: torch.Tensor,
    x_p: torch.Tensor,
    codec: SemanticCodec,
    steg: SignalSteganography,
    spec: ChannelSpec,
    lhat_mode: LostEstimate | str = LostEstimate.ZERO_CONSTANT,
    generator: torch.Generator | None = None,
) -> CovertTransmission:
    """Inference-mode defended link: embed, transmit, extract and decode both images."""
    with torch.no_grad():
        packet = steg.embed(codec.encode(x_h), codec.encode(x_p))
        zc_hat = receive(transmit(packet.container, spec, spec.generator()), spec)
        zh_hat, zp_hat = steg.extract(
            zc_hat, estimate_lost(packet.lost, lhat_mode, generator)
        )
        return CovertTransmission(
            container=packet.container,
            host_hat=codec.decode(zh_hat),
            private_hat=codec.decode(zp_hat),
        )
