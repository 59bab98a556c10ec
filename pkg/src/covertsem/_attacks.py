"""Eavesdropping attacks on a semantic encoder.

Glass-box attacks know the encoder weights and invert it by gradient descent, either in
pixel space or in the latent space of a generative prior. Closed-box attacks only query
the encoder through an API, fit an inverse network on the query pairs and then decode
intercepted signals with it (optionally through the generator).
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass
from enum import Enum
from typing import Any, Protocol

import torch
from torch import nn

from ._channels import (
    ChannelOutput,
    ChannelSpec,
    equalize,
    receive,
    transmit,
    unpair_complex,
)
from ._codec import Decoder, SemanticCodec, check_image
from ._errors import (
    AttackDiverged,
    ConfigError,
    CovertSemError,
    EmptyDataset,
    InvalidShape,
    QueryFailed,
)
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

# Noise variance used in the latent objective when Eve's link is noiseless.
MIN_NOISE_VAR = 1e-6


class SignalEncoder(Protocol):
    """What a glass-box eavesdropper needs from the victim's encoder."""

    image_shape: tuple[int, ...]

    def encode(self, x: torch.Tensor) -> torch.Tensor: ...


class LatentGenerator(Protocol):
    d_s: int
    d_n: int

    def __call__(self, s: torch.Tensor, n: torch.Tensor | None = None) -> torch.Tensor: ...


class Optimizer(str, Enum):
    ADAM = "adam"
    SGD = "sgd"


@dataclass
class AttackConfig:
    """Knobs of the glass-box attacks and of closed-box query collection.

    Args:
        lr (float): Step size. Defaults to 1e-3.
        max_iters (int): Iteration cap of the descent.
        stop_eps (float): Stop once every sample's residual norm is below this.
        sigma_e2 (float | None): Noise variance weighting the latent objective; ``None``
            uses the eavesdropping link's true noise variance.
        rng_seed (int): Seed of the random initialisation; a restart uses ``rng_seed + 1``.
        optimizer (Optimizer): ``adam`` or plain ``sgd``.
        clamp_to_range (bool): Project pixel iterates onto [0, 1] after every step.
        fold_channel (bool): Fold the fading coefficients into the forward function
            instead of equalizing the received signal first.
        n_queries (int): Number M of closed-box queries.
    """

    lr: float = 1e-3
    max_iters: int = 1000
    stop_eps: float = 1e-4
    sigma_e2: float | None = None
    rng_seed: int = 0
    optimizer: Optimizer = Optimizer.ADAM
    clamp_to_range: bool = True
    fold_channel: bool = True
    n_queries: int = 100

    def __post_init__(self) -> None:
        self.optimizer = Optimizer(self.optimizer)
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be at least 1, got {self.max_iters}")
        if self.stop_eps < 0:
            raise ConfigError(f"stop_eps must be non-negative, got {self.stop_eps}")
        if self.sigma_e2 is not None and self.sigma_e2 <= 0:
            raise ConfigError(f"sigma_e2 must be positive, got {self.sigma_e2}")


def forward_fn(x: torch.Tensor, h_e: torch.Tensor, encoder: SignalEncoder) -> torch.Tensor:
    """F(x) = h_e ⊙ encode(x), differentiable in ``x``."""
    z = encoder.encode(x)
    if h_e.shape[-1] != z.shape[-1]:
        raise InvalidShape(
            f"Channel coefficients of length {h_e.shape[-1]} for a signal of length "
            f"{z.shape[-1]}"
        )
    return h_e * z


def _make_optimizer(param: torch.Tensor, cfg: AttackConfig) -> torch.optim.Optimizer:
    if cfg.optimizer is Optimizer.SGD:
        return torch.optim.SGD([param], lr=cfg.lr)
    return torch.optim.Adam([param], lr=cfg.lr)


Objective = Callable[[torch.Tensor], tuple[torch.Tensor, torch.Tensor]]


def _descend(
    start: torch.Tensor,
    objective: Objective,
    cfg: AttackConfig,
    clamp: bool,
    trace: list[float],
) -> torch.Tensor | None:
    """Runs the descent; ``None`` signals a non-finite objective."""
    param = start.clone().requires_grad_(True)
    optimizer = _make_optimizer(param, cfg)
    for step in range(cfg.max_iters):
        optimizer.zero_grad()
        loss, residual = objective(param)
        value = float(loss.detach())
        if not math.isfinite(value):
            return None
        trace.append(value)
        if bool((residual < cfg.stop_eps).all()):
            logger.debug("Residual below %.3g after %d steps", cfg.stop_eps, step)
            break
        loss.backward()
        optimizer.step()
        if clamp:
            with torch.no_grad():
                param.clamp_(0.0, 1.0)
    logger.debug("Descent objective: first %.6g, last %.6g", trace[0], trace[-1])
    return param.detach()


def _with_restart(
    run: Callable[[torch.Generator, bool], torch.Tensor | None],
    cfg: AttackConfig,
    name: str,
) -> torch.Tensor:
    for attempt in range(2):
        generator = torch.Generator().manual_seed(cfg.rng_seed + attempt)
        result = run(generator, attempt == 0)
        if result is not None:
            return result
        logger.warning("%s produced a non-finite objective; restarting", name)
    raise AttackDiverged(f"{name} diverged twice")


def _eve_target(
    zhat_e: torch.Tensor,
    h_e: torch.Tensor,
    cfg: AttackConfig,
    noise_var: float,
    pbar: float,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Target signal and coefficients Eve inverts against."""
    if cfg.fold_channel:
        return zhat_e, h_e
    out = ChannelOutput(received=zhat_e, coefficients=h_e, noise_var=noise_var)
    return equalize(out, pbar), torch.ones_like(h_e)


def glassbox_invert(
    zhat_e: torch.Tensor,
    h_e: torch.Tensor,
    encoder: SignalEncoder,
    cfg: AttackConfig,
    trace: list[float] | None = None,
    noise_var: float = 0.0,
    x0: torch.Tensor | None = None,
    pbar: float = 1.0,
) -> torch.Tensor:
    """Pixel-space model inversion: minimises ½‖ẑ_e − h_e ⊙ E(x)‖² from a random start.

    Args:
        zhat_e (torch.Tensor): Intercepted complex signals ``(B, k)``.
        h_e (torch.Tensor): Eve's channel coefficients, broadcastable to ``zhat_e``.
        encoder (SignalEncoder): The victim encoder, frozen.
        cfg (AttackConfig): Step size, iteration cap and stopping threshold.
        trace (list[float] | None): Filled with the objective of every iteration.
        noise_var (float): Eve's noise variance, used when equalizing.
        x0 (torch.Tensor | None): Starting images; uniform in [0, 1] when omitted.
        pbar (float): Transmit power of the link, used when equalizing.

    Returns:
        torch.Tensor: Reconstructed images ``(B, C, H, W)``.

    Raises:
        AttackDiverged: If the objective is non-finite twice in a row.
    """
    target, coefficients = _eve_target(zhat_e, h_e, cfg, noise_var, pbar)
    shape = (zhat_e.shape[0], *encoder.image_shape)

    def objective(x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        diff = target - forward_fn(x, coefficients, encoder)
        per_sample = diff.abs().pow(2).sum(dim=-1)
        return 0.5 * per_sample.sum(), per_sample.sqrt()

    def run(generator: torch.Generator, first: bool) -> torch.Tensor | None:
        start = x0 if (first and x0 is not None) else torch.rand(shape, generator=generator)
        local: list[float] = []
        with frozen(encoder):
            result = _descend(start.to(target.real.dtype), objective, cfg, cfg.clamp_to_range, local)
        if result is not None and trace is not None:
            trace.extend(local)
        return result

    result = _with_restart(run, cfg, "glass-box inversion")
    return result.clamp(0.0, 1.0) if cfg.clamp_to_range else result


def genai_glassbox_invert(
    zhat_e: torch.Tensor,
    h_e: torch.Tensor,
    encoder: SignalEncoder,
    G: LatentGenerator,
    cfg: AttackConfig,
    trace: list[float] | None = None,
    noise_var: float = 0.0,
    s0: torch.Tensor | None = None,
    pbar: float = 1.0,
) -> torch.Tensor:
    """Latent-space inversion under a standard normal prior, returning ``G(s*)``.

    Minimises ``1/(2σ_e²)·‖ẑ_e − h_e ⊙ E(G(s))‖² + ½‖s‖²`` over ``s``, starting from a
    prior draw. ``σ_e²`` is ``cfg.sigma_e2`` or, when that is ``None``, ``noise_var``.
    """
    sigma2 = cfg.sigma_e2 if cfg.sigma_e2 is not None else max(noise_var, MIN_NOISE_VAR)
    target, coefficients = _eve_target(zhat_e, h_e, cfg, noise_var, pbar)
    shape = (zhat_e.shape[0], G.d_s)

    def objective(s: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        diff = target - forward_fn(G(s), coefficients, encoder)
        per_sample = diff.abs().pow(2).sum(dim=-1)
        loss = per_sample.sum() / (2 * sigma2) + 0.5 * s.pow(2).sum()
        return loss, per_sample.sqrt()

    def run(generator: torch.Generator, first: bool) -> torch.Tensor | None:
        start = s0 if (first and s0 is not None) else torch.randn(shape, generator=generator)
        local: list[float] = []
        with frozen(encoder), frozen(G):
            result = _descend(start.to(target.real.dtype), objective, cfg, False, local)
        if result is not None and trace is not None:
            trace.extend(local)
        return result

    s_star = _with_restart(run, cfg, "GenAI glass-box inversion")
    with torch.no_grad():
        return G(s_star)


class EncoderApi:
    """Query-only view of a deployed encoder: images in, transmitted signals out.

    The encoder itself is not reachable through the public interface.

    Args:
        codec (SemanticCodec): The victim codec.
        max_queries (int | None): Query budget; exceeding it raises :class:`QueryFailed`.
    """

    def __init__(self, codec: SemanticCodec, max_queries: int | None = None) -> None:
        self.__codec = codec
        self.image_shape = codec.image_shape
        self.k = codec.k
        self.max_queries = max_queries
        self.queries = 0

    def _count(self) -> None:
        if self.max_queries is not None and self.queries >= self.max_queries:
            raise QueryFailed(f"Query budget of {self.max_queries} exhausted")
        self.queries += 1

    def _signal(self, x: torch.Tensor) -> torch.Tensor:
        return self.__codec.encode(x)

    def evaluate(self, x: torch.Tensor) -> torch.Tensor:
        self._count()
        try:
            with torch.no_grad():
                return self._signal(x).detach()
        except CovertSemError as e:
            raise QueryFailed(f"Encoder rejected the query: {e}") from e


class DefendedEncoderApi(EncoderApi):
    """Query-only view of a transmitter running the steganographic defense.

    The query image is used as the host; a random image from ``private_pool`` is hidden
    in it, so the returned signal is a container.
    """

    def __init__(
        self,
        codec: SemanticCodec,
        steg: nn.Module,
        private_pool: torch.Tensor,
        generator: torch.Generator,
        max_queries: int | None = None,
    ) -> None:
        super().__init__(codec, max_queries)
        self.__codec = codec
        self.__steg = steg
        self.__pool = private_pool
        self.__generator = generator

    def _signal(self, x: torch.Tensor) -> torch.Tensor:
        index = torch.randint(0, len(self.__pool), (x.shape[0],), generator=self.__generator)
        z_h = self.__codec.encode(x)
        z_p = self.__codec.encode(self.__pool[index])
        return self.__steg.embed(z_h, z_p).container


class QueryApi(Protocol):
    image_shape: tuple[int, ...]
    k: int

    def evaluate(self, x: torch.Tensor) -> torch.Tensor: ...


@dataclass
class QueryDataset:
    """Probe images ``(M, C, H, W)`` and Eve's received signals ``(M, k)``."""

    inputs: torch.Tensor
    signals: torch.Tensor
    channel_spec: ChannelSpec

    def __len__(self) -> int:
        return len(self.inputs)


def collect_query_dataset(
    api: QueryApi,
    probe_images: torch.Tensor,
    spec: ChannelSpec,
    generator: torch.Generator,
) -> QueryDataset:
    """Queries the encoder API with every probe and passes the answers through Eve's
    simulated channel and receiver front end.

    A failing query ends collection early with a warning; the pairs gathered so far are
    returned.
    """
    inputs, signals = [], []
    for i in range(len(probe_images)):
        x = probe_images[i : i + 1]
        try:
            z = api.evaluate(x)
        except (QueryFailed, RuntimeError) as e:
            logger.warning(
                "Query %d of %d failed (%s); keeping %d pairs",
                i + 1,
                len(probe_images),
                e,
                len(inputs),
            )
            break
        zhat = receive(transmit(z, spec, generator), spec)
        inputs.append(x)
        signals.append(zhat)
    if not inputs:
        return QueryDataset(
            inputs=probe_images[:0],
            signals=torch.zeros(0, api.k, dtype=torch.complex64),
            channel_spec=spec,
        )
    return QueryDataset(torch.cat(inputs), torch.cat(signals), spec)


class InverseMode(str, Enum):
    IMAGE = "image"
    LATENT_PLUS_NOISE = "latent_plus_noise"


class InverseNetwork(nn.Module):
    """Eve's learned inverse of the encoder.

    In ``image`` mode it mirrors the semantic decoder; in ``latent_plus_noise`` mode an
    MLP maps the signal to a latent code and a noise vector of the generator.
    """

    def __init__(
        self,
        image_shape: tuple[int, int, int],
        k: int,
        mode: InverseMode | str = InverseMode.IMAGE,
        channels: tuple[int, int] = (32, 64),
        kernel_sizes: tuple[int, int, int] = (9, 5, 5),
        d_s: int = 0,
        d_n: int = 0,
        hidden: int = 512,
    ) -> None:
        super().__init__()
        self.mode = InverseMode(mode)
        self.image_shape = tuple(image_shape)
        self.k = k
        self.d_s = d_s
        self.d_n = d_n
        self._init = {
            "image_shape": list(image_shape),
            "k": k,
            "mode": self.mode.value,
            "channels": list(channels),
            "kernel_sizes": list(kernel_sizes),
            "d_s": d_s,
            "d_n": d_n,
            "hidden": hidden,
        }
        if self.mode is InverseMode.IMAGE:
            self.net: nn.Module = Decoder(image_shape, k, tuple(channels), tuple(kernel_sizes))  # type: ignore[arg-type]
        else:
            if d_s < 1:
                raise InvalidShape("latent_plus_noise mode needs a positive d_s")
            self.net = nn.Sequential(
                nn.Linear(2 * k, hidden), nn.PReLU(), nn.Linear(hidden, d_s + d_n)
            )

    @property
    def init_kwargs(self) -> dict[str, Any]:
        return dict(self._init)

    def forward(self, z: torch.Tensor) -> Any:
        if z.dim() != 2 or z.shape[-1] != self.k:
            raise InvalidShape(f"Expected signals (B, {self.k}), got {tuple(z.shape)}")
        out = self.net(unpair_complex(z))
        if self.mode is InverseMode.IMAGE:
            return out
        return out[:, : self.d_s], out[:, self.d_s :]


@dataclass
class InverseTrainConfig:
    channels: tuple[int, int] = (32, 64)
    kernel_sizes: tuple[int, int, int] = (9, 5, 5)
    hidden: int = 512
    epochs: int = 200
    batch_size: int = 16
    lr: float = 1e-3
    validation_fraction: float = 0.1
    seed: int = 0


def _split_queries(
    qd: QueryDataset, fraction: float, generator: torch.Generator
) -> tuple[torch.Tensor, torch.Tensor]:
    order = torch.randperm(len(qd), generator=generator)
    n_val = int(len(qd) * fraction) if len(qd) >= 10 else 0
    return order[n_val:], order[:n_val]


def _fit_inverse(
    net: InverseNetwork,
    qd: QueryDataset,
    cfg: InverseTrainConfig,
    reconstruct: Callable[[torch.Tensor], torch.Tensor],
    generator: torch.Generator,
    log: TrainingLog,
) -> InverseNetwork:
    if len(qd) == 0:
        raise EmptyDataset("Cannot train an inverse network on an empty query dataset")
    check_image(qd.inputs, net.image_shape)
    train_idx, val_idx = _split_queries(qd, cfg.validation_fraction, generator)
    optimizer = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    last_good = snapshot(net)

    for epoch in progress(range(cfg.epochs), desc=log.stage, total=cfg.epochs):
        net.train()
        total, seen = 0.0, 0
        for index in batches(len(train_idx), cfg.batch_size, generator):
            rows = train_idx[index]
            x, z = qd.inputs[rows], qd.signals[rows]
            loss = (reconstruct(z) - x).pow(2).flatten(1).sum(1).mean()
            check_finite(loss, stage=log.stage, epoch=epoch, last_good_state=last_good)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += float(loss.detach()) * len(rows)
            seen += len(rows)
        last_good = snapshot(net)
        n_pixels = qd.inputs[0].numel()
        row = {"train_mse": total / max(seen, 1) / n_pixels}
        if len(val_idx):
            net.eval()
            with torch.no_grad():
                x_val = qd.inputs[val_idx]
                row["val_mse"] = float(
                    (reconstruct(qd.signals[val_idx]) - x_val).pow(2).mean()
                )
        log.record(epoch, **row)

    net.eval()
    return net


def train_inverse_network(
    qd: QueryDataset, cfg: InverseTrainConfig, log: TrainingLog | None = None
) -> InverseNetwork:
    """Fits an image-mode inverse network minimising ‖D(z̃) − x‖² over the query pairs.

    Raises:
        EmptyDataset: If ``qd`` has no pairs.
        TrainingDiverged: If the loss becomes non-finite.
    """
    generator = torch.Generator().manual_seed(cfg.seed)
    c, h, w = qd.inputs.shape[1:]
    with seeded(generator):
        net = InverseNetwork(
            (c, h, w), qd.signals.shape[-1], InverseMode.IMAGE, cfg.channels, cfg.kernel_sizes
        )
    return _fit_inverse(
        net, qd, cfg, net, generator, log or TrainingLog("inverse")
    )


def closedbox_invert(z: torch.Tensor, net: InverseNetwork) -> torch.Tensor:
    """Single forward pass of a trained image-mode inverse network."""
    net.eval()
    with torch.no_grad():
        return net(z).clamp(0.0, 1.0)


def train_genai_inverse_network(
    qd: QueryDataset,
    G: nn.Module,
    cfg: InverseTrainConfig,
    log: TrainingLog | None = None,
) -> InverseNetwork:
    """Fits a latent-mode inverse network minimising ‖G(D(z̃)) − x‖² with ``G`` frozen."""
    generator = torch.Generator().manual_seed(cfg.seed)
    c, h, w = qd.inputs.shape[1:]
    with seeded(generator):
        net = InverseNetwork(
            (c, h, w),
            qd.signals.shape[-1],
            InverseMode.LATENT_PLUS_NOISE,
            d_s=G.d_s,  # type: ignore[arg-type]
            d_n=G.d_n,  # type: ignore[arg-type]
            hidden=cfg.hidden,
        )

    def reconstruct(z: torch.Tensor) -> torch.Tensor:
        s, n = net(z)
        return G(s, n)

    with frozen(G):
        return _fit_inverse(
            net, qd, cfg, reconstruct, generator, log or TrainingLog("genai_inverse")
        )


def genai_closedbox_invert(
    z: torch.Tensor, net: InverseNetwork, G: nn.Module
) -> torch.Tensor:
    """``G(s, n)`` with ``(s, n)`` predicted from the intercepted signal."""
    net.eval()
    G.eval()
    with torch.no_grad():
        s, n = net(z)
        return G(s, n).clamp(0.0, 1.0)
