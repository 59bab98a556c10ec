"""Channel-signal representation, power normalization and channel simulators.

A channel signal is a complex tensor of shape ``(B, k)``. Its real view ``(B, 2k)`` is
interleaved, so symbol ``i`` is ``(reals[2i], reals[2i + 1])``.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import torch

from ._errors import (
    CsiUnavailable,
    DegenerateSignal,
    InvalidShape,
    NumericalError,
    SingularChannel,
)

logger = logging.getLogger(__name__)


class ChannelFamily(str, Enum):
    AWGN = "awgn"
    RAYLEIGH = "rayleigh"


class CsiPolicy(str, Enum):
    PERFECT = "perfect"
    NONE = "none"


@dataclass(frozen=True)
class ChannelSpec:
    """Channel family, SNR and CSI policy of one link.

    ``snr_db = math.inf`` selects the noiseless mode (``noise_var == 0``).
    """

    family: ChannelFamily = ChannelFamily.AWGN
    snr_db: float = 10.0
    pbar: float = 1.0
    csi: CsiPolicy = CsiPolicy.PERFECT
    rng_seed: int = 0

    def __post_init__(self) -> None:
        # Accept plain strings coming from JSON configs and CLI flags.
        object.__setattr__(self, "family", ChannelFamily(self.family))
        object.__setattr__(self, "csi", CsiPolicy(self.csi))
        if self.pbar <= 0:
            raise ValueError(f"pbar must be positive, got {self.pbar}")
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise NumericalError(f"snr_db must be finite or +inf, got {self.snr_db}")

    @property
    def noise_var(self) -> float:
        """Noise variance per complex symbol, P̄ / 10^(snr/10)."""
        if self.snr_db == math.inf:
            return 0.0
        return self.pbar / 10 ** (self.snr_db / 10)

    def generator(self) -> torch.Generator:
        return torch.Generator().manual_seed(self.rng_seed)


@dataclass
class ChannelOutput:
    received: torch.Tensor
    coefficients: torch.Tensor
    noise_var: float
    csi: CsiPolicy = field(default=CsiPolicy.PERFECT)


def pair_complex(reals: torch.Tensor) -> torch.Tensor:
    """Pairs an interleaved real tensor ``(..., 2k)`` into a complex tensor ``(..., k)``."""
    if reals.shape[-1] % 2 != 0:
        raise InvalidShape(
            f"Real representation must have even length, got {reals.shape[-1]}"
        )
    if reals.is_complex():
        raise InvalidShape("pair_complex expects a real tensor")
    return torch.view_as_complex(
        reals.contiguous().reshape(*reals.shape[:-1], -1, 2)
    )


def unpair_complex(z: torch.Tensor) -> torch.Tensor:
    """Inverse of :func:`pair_complex`."""
    if not z.is_complex():
        raise InvalidShape("unpair_complex expects a complex tensor")
    return torch.view_as_real(z).reshape(*z.shape[:-1], -1)


def signal_power(z: torch.Tensor) -> torch.Tensor:
    """Per-sample average power (1/k)·||z||²."""
    return z.abs().pow(2).mean(dim=-1)


def power_normalize(z: torch.Tensor, pbar: float = 1.0) -> torch.Tensor:
    """Scales every sample so that (1/k)·||z||² == pbar exactly.

    Raises:
        DegenerateSignal: If any sample is the zero vector.
    """
    if pbar <= 0:
        raise ValueError(f"pbar must be positive, got {pbar}")
    k = z.shape[-1]
    norm = torch.linalg.vector_norm(z, dim=-1, keepdim=True)
    if bool((norm == 0).any()):
        raise DegenerateSignal("Cannot normalize the zero signal")
    return z * (math.sqrt(k * pbar) / norm)


def _complex_normal(
    shape: torch.Size, like: torch.Tensor, generator: torch.Generator | None
) -> torch.Tensor:
    # CN(0, 1): each real component has variance 1/2.
    dtype = like.dtype if like.is_complex() else torch.complex64
    sample = torch.randn(shape, dtype=dtype, generator=generator)
    return sample.to(like.device)


def transmit(
    z: torch.Tensor, spec: ChannelSpec, generator: torch.Generator | None = None
) -> ChannelOutput:
    """Sends a power-normalized signal through the channel described by ``spec``.

    AWGN: ``received = z + n``. Rayleigh: ``received = h ⊙ z + n`` with per-symbol
    i.i.d. ``h ~ CN(0, 1)``. Noise ``n ~ CN(0, σ²)`` is drawn independently of ``z`` so
    gradients flow through the channel.

    Args:
        z (torch.Tensor): Complex signal of shape ``(B, k)``.
        spec (ChannelSpec): Channel description.
        generator (torch.Generator | None): RNG handle. Defaults to ``spec.generator()``.

    Returns:
        ChannelOutput: Received signal, the realized coefficients and the noise variance.
    """
    if not z.is_complex():
        raise InvalidShape("transmit expects a complex channel signal")
    if not bool(torch.isfinite(torch.view_as_real(z)).all()):
        raise NumericalError("Channel input contains non-finite values")
    if generator is None:
        generator = spec.generator()

    noise_var = spec.noise_var
    if spec.family is ChannelFamily.RAYLEIGH:
        h = _complex_normal(z.shape, z, generator)
    else:
        h = torch.ones_like(z)

    received = h * z
    if noise_var > 0:
        noise = _complex_normal(z.shape, z, generator)
        received = received + math.sqrt(noise_var) * noise
    return ChannelOutput(
        received=received, coefficients=h, noise_var=noise_var, csi=spec.csi
    )


def equalize(out: ChannelOutput, pbar: float = 1.0) -> torch.Tensor:
    """MMSE equalization z̃ = conj(h)·ẑ / (|h|² + σ²/P̄) using perfect CSI."""
    if out.csi is not CsiPolicy.PERFECT:
        raise CsiUnavailable("Equalization requires perfect channel state information")
    h = out.coefficients
    denominator = h.abs().pow(2) + out.noise_var / pbar
    if bool((denominator == 0).any()):
        raise SingularChannel("Zero channel coefficient in a noiseless channel")
    return h.conj() * out.received / denominator


def receive(out: ChannelOutput, spec: ChannelSpec) -> torch.Tensor:
    """Receiver front end: equalizes faded links, passes AWGN links through."""
    if spec.family is ChannelFamily.RAYLEIGH:
        return equalize(out, spec.pbar)
    return out.received


class UniformSnrSampler:
    """Draws one channel spec per batch with SNR ~ Uniform[low, high] dB."""

    def __init__(
        self,
        family: ChannelFamily | str = ChannelFamily.AWGN,
        low_db: float = 0.0,
        high_db: float = 20.0,
        pbar: float = 1.0,
    ) -> None:
        if high_db < low_db:
            raise ValueError("high_db must not be smaller than low_db")
        self.family = ChannelFamily(family)
        self.low_db = low_db
        self.high_db = high_db
        self.pbar = pbar

    def __call__(self, generator: torch.Generator) -> ChannelSpec:
        u = torch.rand((), generator=generator).item()
        seed = int(torch.randint(0, 2**31 - 1, (), generator=generator).item())
        return ChannelSpec(
            family=self.family,
            snr_db=self.low_db + u * (self.high_db - self.low_db),
            pbar=self.pbar,
            rng_seed=seed,
        )
