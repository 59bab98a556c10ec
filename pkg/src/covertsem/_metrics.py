"""Reconstruction quality and privacy leakage metrics."""

import functools
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import pandas as pd
import torch
import torch.nn.functional as F
from torch import nn

from ._codec import check_image, feature_weights
from ._data import LabeledImages
from ._errors import ConfigError, GateNotMet, InvalidShape
from ._training import TrainingLog, batches, check_finite, progress, seeded, snapshot

logger = logging.getLogger(__name__)

PSNR_CAP_DB = 100.0

# Multi-scale SSIM constants of Wang, Simoncelli & Bovik (2003).
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
SSIM_K = (0.01, 0.03)
SSIM_WIN_SIZE = 11
SSIM_WIN_SIGMA = 1.5


def _check_pair(x: torch.Tensor, y: torch.Tensor) -> None:
    if x.shape != y.shape:
        raise InvalidShape(f"Shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    if x.dim() != 4:
        raise InvalidShape(f"Expected image batches (B, C, H, W), got {tuple(x.shape)}")


def psnr(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Per-sample PSNR in dB for images in [0, 1], capped at 100 dB when MSE is 0."""
    _check_pair(x, y)
    mse = (x - y).pow(2).flatten(1).mean(dim=1)
    value = 10 * torch.log10(1.0 / mse)
    return torch.where(mse == 0, torch.full_like(value, PSNR_CAP_DB), value).clamp(
        max=PSNR_CAP_DB
    )


def _gaussian_window(size: int, sigma: float) -> torch.Tensor:
    coords = torch.arange(size, dtype=torch.float) - size // 2
    g = torch.exp(-(coords**2) / (2 * sigma**2))
    return (g / g.sum()).reshape(1, 1, 1, -1)


def _gaussian_filter(x: torch.Tensor, win: torch.Tensor) -> torch.Tensor:
    channels = x.shape[1]
    win = win.to(x).repeat(channels, 1, 1, 1)
    # Separable valid convolution, along H then W.
    out = F.conv2d(x, win.transpose(2, 3), groups=channels)
    return F.conv2d(out, win, groups=channels)


def _ssim(
    x: torch.Tensor, y: torch.Tensor, win: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    c1 = SSIM_K[0] ** 2
    c2 = SSIM_K[1] ** 2
    mu_x = _gaussian_filter(x, win)
    mu_y = _gaussian_filter(y, win)
    mu_xx, mu_yy, mu_xy = mu_x.pow(2), mu_y.pow(2), mu_x * mu_y
    sigma_xx = _gaussian_filter(x * x, win) - mu_xx
    sigma_yy = _gaussian_filter(y * y, win) - mu_yy
    sigma_xy = _gaussian_filter(x * y, win) - mu_xy
    cs_map = (2 * sigma_xy + c2) / (sigma_xx + sigma_yy + c2)
    ssim_map = ((2 * mu_xy + c1) / (mu_xx + mu_yy + c1)) * cs_map
    return ssim_map.flatten(2).mean(-1), cs_map.flatten(2).mean(-1)


@functools.lru_cache(maxsize=None)
def _scale_count(smaller_side: int, win_size: int, max_scales: int) -> int:
    scales = max_scales
    while scales > 1 and smaller_side <= (win_size - 1) * 2 ** (scales - 1):
        scales -= 1
    if scales < max_scales:
        logger.warning(
            "Image side %d is too small for %d MS-SSIM scales; using %d",
            smaller_side,
            max_scales,
            scales,
        )
    return scales


@functools.lru_cache(maxsize=None)
def _window_size(smaller_side: int) -> int:
    if smaller_side >= SSIM_WIN_SIZE:
        return SSIM_WIN_SIZE
    # largest odd window that still fits
    size = smaller_side - (1 - smaller_side % 2)
    logger.warning(
        "Image side %d is smaller than the SSIM window %d; using single-scale SSIM "
        "with a window of %d",
        smaller_side,
        SSIM_WIN_SIZE,
        size,
    )
    return size


def ms_ssim(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Per-sample multi-scale SSIM for images in [0, 1].

    Gaussian window 11 with sigma 1.5, K = (0.01, 0.03) and the canonical five-scale
    weights. Images whose shorter side is not larger than ``10 * 2**(scales - 1)`` are
    evaluated on fewer scales with the leading weights renormalised to sum to one.
    Images smaller than the window fall back to single-scale SSIM with the largest odd
    window that fits.
    """
    _check_pair(x, y)
    win_size = _window_size(min(x.shape[-2:]))
    if win_size < SSIM_WIN_SIZE:
        scales = 1
    else:
        scales = _scale_count(min(x.shape[-2:]), win_size, len(MS_SSIM_WEIGHTS))
    weights = x.new_tensor(MS_SSIM_WEIGHTS[:scales])
    weights = weights / weights.sum()
    win = _gaussian_window(win_size, SSIM_WIN_SIGMA)

    mcs = []
    for i in range(scales):
        ssim_per_channel, cs = _ssim(x, y, win)
        if i < scales - 1:
            mcs.append(torch.relu(cs))
            padding = [s % 2 for s in x.shape[2:]]
            x = F.avg_pool2d(x, kernel_size=2, padding=padding)
            y = F.avg_pool2d(y, kernel_size=2, padding=padding)
    stacked = torch.stack([*mcs, torch.relu(ssim_per_channel)], dim=0)
    value = torch.prod(stacked ** weights.view(-1, 1, 1), dim=0)
    return value.mean(dim=1)


def normalize_channels(f: torch.Tensor, eps: float = 1e-10) -> torch.Tensor:
    """Scales every spatial feature vector to unit length, as LPIPS does."""
    return f / torch.sqrt(f.pow(2).sum(dim=1, keepdim=True) + eps)


def perceptual_distance(
    x: torch.Tensor,
    y: torch.Tensor,
    feature_net: Any,
    layer_weights: tuple[float, ...] | None = None,
) -> torch.Tensor:
    """LPIPS-style distance under a frozen feature network, one value per sample.

    ``feature_net.features`` must return channel-normalised maps (the identity backbone
    does). Each layer contributes its squared difference summed over channels and
    averaged over positions.
    """
    _check_pair(x, y)
    with torch.no_grad():
        fx = feature_net.features(x)
        fy = feature_net.features(y)
    weights = feature_weights(len(fx), layer_weights)
    distance = x.new_zeros(x.shape[0])
    for weight, a, b in zip(weights, fx, fy):
        distance = distance + weight * (a - b).pow(2).sum(dim=1).flatten(1).mean(dim=1)
    return distance


class DecisionRule(str, Enum):
    NEAREST_CLASS = "nearest_class"
    COSINE_THRESHOLD = "cosine_threshold"


class IdentityModel(nn.Module):
    """Small face-identity classifier with an exposed embedding.

    The conv backbone doubles as the perceptual feature network of the codec: its
    :meth:`features` returns the channel-normalised output of every stage.

    Args:
        image_shape (tuple[int, int, int]): ``(C, H, W)`` of the input images.
        n_identities (int): Number of known identities.
        widths (tuple[int, ...]): Channel width of each backbone stage.
        embedding_dim (int): Dimension of the unit-norm identity embedding.
        rule (DecisionRule): How two images are judged to show the same person.
        threshold (float): Cosine threshold used by ``cosine_threshold``.
    """

    def __init__(
        self,
        image_shape: tuple[int, int, int] = (3, 64, 64),
        n_identities: int = 2,
        widths: tuple[int, ...] = (16, 32, 64),
        embedding_dim: int = 64,
        rule: DecisionRule | str = DecisionRule.NEAREST_CLASS,
        threshold: float = 0.5,
    ) -> None:
        super().__init__()
        self.image_shape = tuple(image_shape)
        self.rule = DecisionRule(rule)
        self._init = {
            "image_shape": list(image_shape),
            "n_identities": n_identities,
            "widths": list(widths),
            "embedding_dim": embedding_dim,
            "rule": self.rule.value,
            "threshold": threshold,
        }
        stages = []
        c_in = image_shape[0]
        for width in widths:
            stages.append(
                nn.Sequential(
                    nn.Conv2d(c_in, width, 3, padding=1),
                    nn.SiLU(),
                    nn.Conv2d(width, width, 3, padding=1),
                    nn.SiLU(),
                )
            )
            c_in = width
        self.stages = nn.ModuleList(stages)
        self.embedding = nn.Linear(c_in, embedding_dim)
        self.classifier = nn.Linear(embedding_dim, n_identities)
        self.register_buffer("threshold", torch.tensor(float(threshold)))

    @property
    def init_kwargs(self) -> dict[str, Any]:
        kwargs = dict(self._init)
        kwargs["threshold"] = float(self.threshold)
        return kwargs

    def _trunk(self, x: torch.Tensor) -> list[torch.Tensor]:
        check_image(x, self.image_shape)
        maps = []
        h = x
        for i, stage in enumerate(self.stages):
            if i > 0:
                h = F.avg_pool2d(h, 2)
            h = stage(h)
            maps.append(h)
        return maps

    def features(self, x: torch.Tensor) -> list[torch.Tensor]:
        return [normalize_channels(f) for f in self._trunk(x)]

    def embed(self, x: torch.Tensor) -> torch.Tensor:
        pooled = self._trunk(x)[-1].mean(dim=(2, 3))
        return F.normalize(self.embedding(pooled), dim=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.classifier(self.embed(x))

    def identify(self, x: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            return self(x).argmax(dim=1)

    def same_identity(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        """Boolean per pair: does ``a[i]`` show the same person as ``b[i]``?"""
        if self.rule is DecisionRule.COSINE_THRESHOLD:
            with torch.no_grad():
                cosine = (self.embed(a) * self.embed(b)).sum(dim=1)
            return cosine >= self.threshold
        return self.identify(a) == self.identify(b)


@dataclass
class IdentityTrainConfig:
    image_shape: tuple[int, int, int] = (3, 64, 64)
    widths: tuple[int, ...] = (16, 32, 64)
    embedding_dim: int = 64
    rule: DecisionRule = DecisionRule.NEAREST_CLASS
    true_positive_rate: float = 0.95
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    holdout_fraction: float = 0.2
    gate: float = 0.9
    flip: bool = True

    def __post_init__(self) -> None:
        self.rule = DecisionRule(self.rule)
        if not 0 < self.holdout_fraction < 1:
            raise ConfigError("holdout_fraction must lie in (0, 1)")


def stratified_split(
    labels: torch.Tensor, fraction: float, generator: torch.Generator
) -> tuple[torch.Tensor, torch.Tensor]:
    """Holds out ``fraction`` of every class, at least one image when a class has two."""
    train, held = [], []
    for label in labels.unique(sorted=True):
        members = (labels == label).nonzero().flatten()
        members = members[torch.randperm(len(members), generator=generator)]
        n_held = min(max(1, round(len(members) * fraction)), len(members) - 1)
        held.append(members[:n_held])
        train.append(members[n_held:])
    return torch.cat(train).sort().values, torch.cat(held).sort().values


def calibrate_threshold(
    model: IdentityModel, images: torch.Tensor, labels: torch.Tensor, tpr: float
) -> float:
    """Cosine threshold accepting ``tpr`` of same-identity pairs of ``images``."""
    with torch.no_grad():
        emb = model.embed(images)
    cosine = emb @ emb.T
    same = (labels[:, None] == labels[None, :]) & ~torch.eye(
        len(labels), dtype=torch.bool
    )
    scores = cosine[same]
    if scores.numel() == 0:
        logger.warning("No same-identity pairs to calibrate the cosine threshold")
        return 0.5
    return float(torch.quantile(scores, 1.0 - tpr))


def train_identity_model(
    dataset: LabeledImages,
    cfg: IdentityTrainConfig,
    generator: torch.Generator,
    log: TrainingLog | None = None,
) -> IdentityModel:
    """Trains the local identity classifier and checks its held-out accuracy.

    Raises:
        GateNotMet: With fewer than two identities, or when held-out accuracy is below
            ``cfg.gate``.
        TrainingDiverged: If the cross-entropy becomes non-finite.
    """
    log = log or TrainingLog("identity")
    n_classes = len(dataset.identities)
    if n_classes < 2:
        raise GateNotMet(
            f"Identification needs at least two identities, got {n_classes}"
        )
    check_image(dataset.images, cfg.image_shape)
    train_idx, held_idx = stratified_split(
        dataset.labels, cfg.holdout_fraction, generator
    )
    x_train, y_train = dataset.images[train_idx], dataset.labels[train_idx]
    x_held, y_held = dataset.images[held_idx], dataset.labels[held_idx]

    with seeded(generator):
        model = IdentityModel(
            cfg.image_shape, n_classes, cfg.widths, cfg.embedding_dim, cfg.rule
        )
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    last_good = snapshot(model)

    accuracy = 0.0
    for epoch in progress(range(cfg.epochs), desc="identity", total=cfg.epochs):
        model.train()
        total, seen = 0.0, 0
        for index in batches(len(x_train), cfg.batch_size, generator):
            x, y = x_train[index], y_train[index]
            if cfg.flip:
                mask = torch.rand(len(index), generator=generator) < 0.5
                x = torch.where(mask[:, None, None, None], x.flip(-1), x)
            loss = F.cross_entropy(model(x), y)
            check_finite(loss, stage="identity", epoch=epoch, last_good_state=last_good)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += float(loss.detach()) * len(index)
            seen += len(index)
        last_good = snapshot(model)
        model.eval()
        accuracy = float((model.identify(x_held) == y_held).float().mean())
        log.record(epoch, loss=total / max(seen, 1), held_out_accuracy=accuracy)

    model.eval()
    if accuracy < cfg.gate:
        raise GateNotMet(
            f"Identity model reached {accuracy:.3f} held-out accuracy, "
            f"below the {cfg.gate:.2f} gate",
            accuracy=accuracy,
        )
    if cfg.rule is DecisionRule.COSINE_THRESHOLD:
        threshold = calibrate_threshold(model, x_held, y_held, cfg.true_positive_rate)
        model.threshold.fill_(threshold)
        logger.info("Calibrated cosine threshold %.4f", threshold)
    logger.info("Identity model held-out accuracy %.3f", accuracy)
    return model


def fpesr(
    recons: torch.Tensor, originals: torch.Tensor, id_model: IdentityModel
) -> float:
    """Fraction of reconstructions judged to show the same person as their original."""
    if len(recons) != len(originals):
        raise InvalidShape(
            f"Got {len(recons)} reconstructions for {len(originals)} originals"
        )
    if len(recons) == 0:
        return 0.0
    id_model.eval()
    return float(id_model.same_identity(recons, originals).float().mean())


@dataclass
class MetricReport:
    """Per-sample metric rows plus their aggregates.

    ``rows`` holds one row per reconstruction with ``psnr``, ``ms_ssim``, ``perceptual``
    and, when an identity model was available, ``identified``.
    """

    rows: pd.DataFrame
    labels: dict[str, Any] = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return len(self.rows)

    @property
    def fpesr(self) -> float | None:
        if "identified" not in self.rows:
            return None
        return float(self.rows["identified"].astype(float).mean())

    def summary(self) -> dict[str, Any]:
        out: dict[str, Any] = dict(self.labels)
        out["n_samples"] = self.n_samples
        for column in ("psnr", "ms_ssim", "perceptual"):
            if column in self.rows:
                values = self.rows[column].astype(float)
                out[f"{column}_mean"] = float(values.mean())
                out[f"{column}_std"] = float(values.std(ddof=0))
        out["fpesr"] = self.fpesr
        return out

    def save(self, directory: Path, name: str) -> tuple[Path, Path]:
        directory.mkdir(parents=True, exist_ok=True)
        rows_path = directory / f"{name}.jsonl"
        summary_path = directory / f"{name}.summary.json"
        self.rows.to_json(rows_path, orient="records", lines=True)
        summary_path.write_text(json.dumps(self.summary(), indent=2, default=str))
        return rows_path, summary_path

    @classmethod
    def load(cls, rows_path: Path) -> "MetricReport":
        rows = pd.read_json(rows_path, orient="records", lines=True)
        summary_path = rows_path.with_name(
            rows_path.name.removesuffix(".jsonl") + ".summary.json"
        )
        labels: dict[str, Any] = {}
        if summary_path.exists():
            summary = json.loads(summary_path.read_text())
            labels = {
                k: v
                for k, v in summary.items()
                if k != "n_samples" and k != "fpesr" and not k.endswith(("_mean", "_std"))
            }
        return cls(rows=rows, labels=labels)


def evaluate_reconstructions(
    recons: torch.Tensor,
    originals: torch.Tensor,
    id_model: IdentityModel | None = None,
    feature_net: Any = None,
    **labels: Any,
) -> MetricReport:
    """Scores a batch of reconstructions against their originals.

    ``feature_net`` defaults to ``id_model``; without either, the perceptual column is
    left out. ``labels`` (strategy, family, snr_db, ...) are attached to the summary.
    """
    recons = recons.detach().clamp(0, 1)
    originals = originals.detach()
    data: dict[str, list[Any]] = {
        "psnr": psnr(recons, originals).tolist(),
        "ms_ssim": ms_ssim(recons, originals).tolist(),
    }
    feature_net = feature_net if feature_net is not None else id_model
    if feature_net is not None:
        data["perceptual"] = perceptual_distance(recons, originals, feature_net).tolist()
    if id_model is not None:
        id_model.eval()
        data["identified"] = id_model.same_identity(recons, originals).tolist()
    rows = pd.DataFrame(data)
    rows.insert(0, "sample", range(len(rows)))
    report = MetricReport(rows=rows, labels=labels)
    logger.debug("Metrics %s", {k: v for k, v in report.summary().items()})
    return report


def chance_level(n_identities: int) -> float:
    return 1.0 / n_identities if n_identities > 0 else math.nan
