"""Experiment configuration, stage orchestration and the eavesdropping evaluation grid."""

import dataclasses
import hashlib
import json
import logging
import types
import typing
from collections.abc import Collection
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Union

import pandas as pd
import torch
from torch import nn

from ._attacks import (
    AttackConfig,
    DefendedEncoderApi,
    EncoderApi,
    InverseTrainConfig,
    closedbox_invert,
    collect_query_dataset,
    genai_closedbox_invert,
    genai_glassbox_invert,
    glassbox_invert,
    train_genai_inverse_network,
    train_inverse_network,
)
from ._channels import ChannelFamily, ChannelSpec, UniformSnrSampler, receive, transmit
from ._codec import CodecTrainConfig, SemanticCodec, reconstruct, train_codec
from ._core import checkpointed
from ._data import LabeledImages, SplitSpec, load_dataset, make_synthetic_dataset, split_dataset
from ._errors import ConfigError, CovertSemError
from ._generator import Generator, GeneratorTrainConfig, train_generator
from ._hashing import config_hash, content_hash, to_jsonable
from ._metrics import (
    IdentityModel,
    IdentityTrainConfig,
    MetricReport,
    evaluate_reconstructions,
    ms_ssim,
    psnr,
    train_identity_model,
)
from ._steganography import (
    LostEstimate,
    SignalSteganography,
    StegTrainConfig,
    covert_link,
    train_steganography,
)
from ._training import TrainingLog
from ._utils import format_snr

logger = logging.getLogger(__name__)

STAGES = ("identity", "codec", "generator", "steganography", "attacks", "defense")


class Strategy(str, Enum):
    DECODER = "decoder"
    GLASS = "glass"
    CLOSED = "closed"
    GENAI_GLASS = "genai-glass"
    GENAI_CLOSED = "genai-closed"

    @property
    def needs_generator(self) -> bool:
        return self in (Strategy.GENAI_GLASS, Strategy.GENAI_CLOSED)


ALL_STRATEGIES = tuple(Strategy)
BOB = "bob"


@dataclass
class DatasetSection:
    """Where images come from. ``path=None`` uses the synthetic identity set."""

    path: str | None = None
    image_shape: tuple[int, int, int] = (3, 64, 64)
    train_parts: int = 14
    test_parts: int = 1
    synthetic_identities: int = 10
    synthetic_per_identity: int = 30


@dataclass
class AttackSection:
    strategies: tuple[Strategy, ...] = ALL_STRATEGIES
    families: tuple[ChannelFamily, ...] = (ChannelFamily.AWGN, ChannelFamily.RAYLEIGH)
    snrs_db: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    n_eval: int = 32
    n_preview: int = 8
    config: AttackConfig = field(default_factory=AttackConfig)
    inverse: InverseTrainConfig = field(default_factory=InverseTrainConfig)

    def __post_init__(self) -> None:
        self.strategies = tuple(Strategy(s) for s in self.strategies)
        self.families = tuple(ChannelFamily(f) for f in self.families)


@dataclass
class DefenseSection:
    enabled: bool = True
    families: tuple[ChannelFamily, ...] = (ChannelFamily.AWGN,)
    snr_db: float = 20.0
    utility_snrs_db: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    lambda3_rayleigh: float = 3.0
    lhat_mode: LostEstimate = LostEstimate.ZERO_CONSTANT

    def __post_init__(self) -> None:
        self.families = tuple(ChannelFamily(f) for f in self.families)
        self.lhat_mode = LostEstimate(self.lhat_mode)


@dataclass
class ExperimentConfig:
    """Root of the experiment configuration tree.

    Every section has defaults; :func:`load_experiment_config` fills in whatever a JSON
    file leaves out and rejects unknown keys.
    """

    dataset: DatasetSection = field(default_factory=DatasetSection)
    identity: IdentityTrainConfig = field(default_factory=IdentityTrainConfig)
    codec: CodecTrainConfig = field(default_factory=CodecTrainConfig)
    generator: GeneratorTrainConfig = field(default_factory=GeneratorTrainConfig)
    steganography: StegTrainConfig = field(default_factory=StegTrainConfig)
    attacks: AttackSection = field(default_factory=AttackSection)
    defense: DefenseSection = field(default_factory=DefenseSection)
    seed: int = 0
    output_dir: str = "runs/default"
    workers: int = 4
    preview_snr_db: float = 5.0


def _convert(tp: Any, value: Any, path: str) -> Any:
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if dataclasses.is_dataclass(tp):
        return config_from_dict(tp, value, path)  # type: ignore[arg-type]
    if origin in (Union, types.UnionType):
        if value is None:
            return None
        inner = [a for a in args if a is not type(None)]
        return _convert(inner[0], value, path)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path} must be a list, got {value!r}")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_convert(args[0], v, path) for v in value)
        if len(args) != len(value):
            raise ConfigError(f"{path} must have {len(args)} entries, got {len(value)}")
        return tuple(_convert(a, v, path) for a, v in zip(args, value))
    if isinstance(tp, type) and issubclass(tp, Enum):
        try:
            return tp(value)
        except ValueError as e:
            raise ConfigError(f"{path}: {e}") from e
    if tp is float and isinstance(value, (int, float)):
        return float(value)
    return value


def config_from_dict(cls: type, data: Any, path: str = "config") -> Any:
    """Builds dataclass ``cls`` from nested dicts, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must be a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls) if f.compare}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Unknown keys in {path}: {', '.join(unknown)}")
    kwargs = {k: _convert(hints[k], v, f"{path}.{k}") for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"Invalid {path}: {e}") from e


def load_experiment_config(path: Path | str) -> ExperimentConfig:
    """Reads a JSON experiment config; missing keys take their defaults."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from e
    return config_from_dict(ExperimentConfig, data)


def dump_experiment_config(cfg: ExperimentConfig, path: Path | str | None = None) -> str:
    """The fully resolved config as JSON, every default included."""
    text = json.dumps(to_jsonable(cfg), indent=2)
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    return text


def label_seed(*parts: Any) -> int:
    """Stable 31-bit seed from any labels, independent of execution order."""
    digest = hashlib.sha1(":".join(map(str, parts)).encode()).hexdigest()
    return int(digest[:8], 16) & 0x7FFFFFFF


def stage_generator(seed: int, *labels: Any) -> torch.Generator:
    return torch.Generator().manual_seed(label_seed(seed, *labels))


@dataclass
class GridCell:
    strategy: str
    family: ChannelFamily
    snr_db: float
    defended: bool = False

    @property
    def name(self) -> str:
        prefix = "defended_" if self.defended else ""
        return f"{prefix}{self.strategy}"

    def directory(self, root: Path) -> Path:
        return root / "cells" / self.family.value / format_snr(self.snr_db) / self.name


@dataclass
class ExperimentRecord:
    """Everything a run produced, serialisable to ``record.json``.

    ``reports`` holds one summary per metric report (labelled with strategy, family,
    SNR, defence flag and reference image) plus the path of its per-sample rows.
    """

    config: dict[str, Any]
    config_hash: str
    seed: int
    output_dir: str
    identities: list[str] = field(default_factory=list)
    checkpoints: dict[str, dict[str, str]] = field(default_factory=dict)
    reports: list[dict[str, Any]] = field(default_factory=list)
    utility: list[dict[str, Any]] = field(default_factory=list)
    failures: list[dict[str, str]] = field(default_factory=list)
    plots: list[str] = field(default_factory=list)

    def reports_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.reports)

    def save(self, path: Path | None = None) -> Path:
        path = path or Path(self.output_dir) / "record.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(dataclasses.asdict(self), indent=2, default=str))
        return path


def load_record(path: Path | str) -> ExperimentRecord:
    return ExperimentRecord(**json.loads(Path(path).read_text()))


@dataclass
class _Context:
    cfg: ExperimentConfig
    run_dir: Path
    codec: SemanticCodec
    id_model: IdentityModel | None
    G: Generator | None
    stegs: dict[ChannelFamily, SignalSteganography]
    x_eval: torch.Tensor
    x_host: torch.Tensor
    probes: torch.Tensor
    pool: torch.Tensor


def _load_data(
    cfg: ExperimentConfig,
) -> tuple[LabeledImages, LabeledImages, list[str]]:
    split = SplitSpec(cfg.dataset.train_parts, cfg.dataset.test_parts)
    generator = stage_generator(cfg.seed, "split")
    if cfg.dataset.path is not None:
        return load_dataset(
            Path(cfg.dataset.path), cfg.dataset.image_shape, split, generator
        )
    data = make_synthetic_dataset(
        cfg.dataset.synthetic_identities,
        cfg.dataset.synthetic_per_identity,
        cfg.dataset.image_shape,
        stage_generator(cfg.seed, "synthetic"),
    )
    train, test = split_dataset(data, split, generator)
    return train, test, data.identities


def _resolve(cfg: ExperimentConfig) -> ExperimentConfig:
    """Propagates the dataset image shape into every model section."""
    shape = tuple(cfg.dataset.image_shape)
    return dataclasses.replace(
        cfg,
        identity=dataclasses.replace(cfg.identity, image_shape=shape),
        codec=dataclasses.replace(cfg.codec, image_shape=shape),
        generator=dataclasses.replace(cfg.generator, image_shape=shape),
    )


class _Stages:
    """Checkpointed stage runners bound to one run directory."""

    def __init__(self, record: ExperimentRecord, run_dir: Path, resume: bool | None):
        self.record = record
        self.run_dir = run_dir
        self.checkpoint_dir = run_dir / "checkpoints"
        self.resume = resume

    def run(self, stage: str, func: Any, *args: Any, **kwargs: Any) -> nn.Module:
        wrapped = checkpointed(
            func,
            stage=stage,
            checkpoint_dir=self.checkpoint_dir,
            resume_enabled=self.resume,
        )
        log = TrainingLog(stage)
        result = wrapped(*args, log=log, **kwargs)
        if log.rows:
            log.save(self.run_dir / "logs" / f"{stage}.parquet")
        path = wrapped.last_checkpoint
        if path is not None:
            self.record.checkpoints[stage] = {
                "path": str(path),
                "sha1": content_hash(path),
            }
        return result

    def attempt(self, stage: str, func: Any, *args: Any, **kwargs: Any) -> nn.Module | None:
        """Like :meth:`run`, but records a failed stage and returns ``None``."""
        try:
            module = self.run(stage, func, *args, **kwargs)
        except CovertSemError as e:
            logger.warning("Stage %s failed, dependent cells are skipped: %s", stage, e)
            self.record.failures.append({"stage": stage, "error": f"{type(e).__name__}: {e}"})
            return None
        module.requires_grad_(False)
        return module


def _attack_config(cfg: ExperimentConfig, seed: int) -> AttackConfig:
    """The configured attack with its restart seed replaced by the cell seed.

    The cell seed already mixes in ``cfg.attacks.config.rng_seed``.
    """
    return dataclasses.replace(cfg.attacks.config, rng_seed=seed)


def _require_generator(ctx: _Context) -> Generator:
    if ctx.G is None:
        raise ConfigError("GenAI attacks need the generator stage")
    return ctx.G


def _run_cell(cell: GridCell, ctx: _Context) -> list[dict[str, Any]]:
    """Runs one (strategy, family, snr) cell and writes its outputs to a private folder."""
    cfg = ctx.cfg
    seed = label_seed(
        cfg.seed, cfg.attacks.config.rng_seed, cell.name, cell.family.value, cell.snr_db
    )
    generator = torch.Generator().manual_seed(seed)
    cell_dir = cell.directory(ctx.run_dir)
    cell_dir.mkdir(parents=True, exist_ok=True)
    codec = ctx.codec
    spec = ChannelSpec(cell.family, cell.snr_db, codec.pbar, rng_seed=seed)

    with torch.no_grad():
        if cell.defended:
            steg = ctx.stegs[cell.family]
            signal = steg.embed(codec.encode(ctx.x_host), codec.encode(ctx.x_eval)).container
        else:
            signal = codec.encode(ctx.x_eval)
    out = transmit(signal, spec, spec.generator())
    zhat = receive(out, spec)
    trace: list[float] = []
    strategy = cell.strategy

    if strategy == BOB:
        if cell.defended:
            link = covert_link(
                ctx.x_host, ctx.x_eval, codec, ctx.stegs[cell.family], spec,
                cfg.defense.lhat_mode, generator,
            )
            recon = link.private_hat
        else:
            recon = reconstruct(codec, ctx.x_eval, spec)
    elif strategy == Strategy.DECODER:
        with torch.no_grad():
            recon = codec.decode(zhat)
    elif strategy == Strategy.GLASS:
        recon = glassbox_invert(
            out.received, out.coefficients, codec, _attack_config(cfg, seed),
            trace, noise_var=out.noise_var, pbar=codec.pbar,
        )
    elif strategy == Strategy.GENAI_GLASS:
        recon = genai_glassbox_invert(
            out.received, out.coefficients, codec, _require_generator(ctx), _attack_config(cfg, seed),
            trace, noise_var=out.noise_var, pbar=codec.pbar,
        )
    else:
        if cell.defended:
            api: EncoderApi = DefendedEncoderApi(
                codec, ctx.stegs[cell.family], ctx.pool, generator
            )
        else:
            api = EncoderApi(codec)
        sim = ChannelSpec(cell.family, cell.snr_db, codec.pbar, rng_seed=seed + 1)
        qd = collect_query_dataset(api, ctx.probes, sim, generator)
        inverse_cfg = dataclasses.replace(cfg.attacks.inverse, seed=seed)
        log = TrainingLog(f"{cell.name}_inverse")
        if strategy == Strategy.CLOSED:
            net = train_inverse_network(qd, inverse_cfg, log)
            recon = closedbox_invert(zhat, net)
        else:
            G = _require_generator(ctx)
            net = train_genai_inverse_network(qd, G, inverse_cfg, log)
            recon = genai_closedbox_invert(zhat, net, G)
        log.save(cell_dir / "inverse_log.parquet")

    labels = {
        "strategy": strategy,
        "family": cell.family.value,
        "snr_db": cell.snr_db,
        "defended": cell.defended,
    }
    summaries = []
    targets = {"private" if cell.defended else "original": ctx.x_eval}
    if cell.defended:
        targets["host"] = ctx.x_host
    for target, reference in targets.items():
        report = evaluate_reconstructions(
            recon, reference, ctx.id_model, target=target, **labels
        )
        rows_path, _ = report.save(cell_dir, f"metrics_{target}")
        summaries.append({**report.summary(), "rows_path": str(rows_path)})
    torch.save(recon[: cfg.attacks.n_preview].detach().clone(), cell_dir / "samples.pt")
    if trace:
        (cell_dir / "trace.json").write_text(json.dumps(trace))
    return summaries


def _grid(cfg: ExperimentConfig, defended: bool) -> list[GridCell]:
    strategies = [BOB, *[s.value for s in cfg.attacks.strategies]]
    if defended:
        return [
            GridCell(s, family, cfg.defense.snr_db, defended=True)
            for family in cfg.defense.families
            for s in strategies
        ]
    return [
        GridCell(s, family, snr)
        for family in cfg.attacks.families
        for snr in cfg.attacks.snrs_db
        for s in strategies
    ]


def _runnable(cell: GridCell, ctx: _Context) -> bool:
    if cell.strategy != BOB and Strategy(cell.strategy).needs_generator and ctx.G is None:
        return False
    return not cell.defended or cell.family in ctx.stegs


def _run_grid(
    cells: list[GridCell], ctx: _Context, record: ExperimentRecord
) -> None:
    def guarded(cell: GridCell) -> tuple[GridCell, list[dict[str, Any]] | Exception]:
        try:
            return cell, _run_cell(cell, ctx)
        except (CovertSemError, RuntimeError, ValueError) as e:
            return cell, e

    skipped = [c for c in cells if not _runnable(c, ctx)]
    if skipped:
        logger.warning(
            "Skipping %d cells whose generator or steganography stage failed", len(skipped)
        )
    cells = [c for c in cells if _runnable(c, ctx)]
    with ThreadPoolExecutor(max_workers=max(1, ctx.cfg.workers)) as pool:
        results = list(pool.map(guarded, cells))
    for cell, outcome in results:
        if isinstance(outcome, Exception):
            logger.warning("Cell %s/%s/%g failed: %s", cell.name, cell.family.value, cell.snr_db, outcome)
            record.failures.append(
                {
                    "stage": "defense" if cell.defended else "attacks",
                    "cell": f"{cell.name}/{cell.family.value}/{cell.snr_db:g}",
                    "error": f"{type(outcome).__name__}: {outcome}",
                }
            )
        else:
            record.reports.extend(outcome)


def _utility_sweep(ctx: _Context) -> list[dict[str, Any]]:
    """Bob's quality with and without the defence over the utility SNR sweep."""
    rows = []
    cfg = ctx.cfg
    for family, steg in ctx.stegs.items():
        for snr in cfg.defense.utility_snrs_db:
            seed = label_seed(cfg.seed, "utility", family.value, snr)
            spec = ChannelSpec(family, snr, ctx.codec.pbar, rng_seed=seed)
            plain = reconstruct(ctx.codec, ctx.x_eval, spec)
            link = covert_link(
                ctx.x_host, ctx.x_eval, ctx.codec, steg, spec, cfg.defense.lhat_mode,
                torch.Generator().manual_seed(seed),
            )
            for system, recon, reference in (
                ("undefended", plain, ctx.x_eval),
                ("defended_private", link.private_hat, ctx.x_eval),
                ("defended_host", link.host_hat, ctx.x_host),
            ):
                rows.append(
                    {
                        "family": family.value,
                        "snr_db": snr,
                        "system": system,
                        "psnr": float(psnr(recon, reference).mean()),
                        "ms_ssim": float(ms_ssim(recon, reference).mean()),
                    }
                )
    return rows


def run_experiment(
    cfg: ExperimentConfig,
    stages: Collection[str] | None = None,
    resume: bool | None = None,
) -> ExperimentRecord:
    """Runs the pipeline: identity model, codec, generator, steganography, attack grid
    and defence evaluation, in that order.

    Args:
        cfg (ExperimentConfig): The experiment.
        stages (Collection[str] | None): Subset of :data:`STAGES` to run; prerequisites
            of a requested stage run too (and are loaded from checkpoints when possible).
        resume (bool | None): Reuse checkpoints; defaults to the runtime config.

    Returns:
        ExperimentRecord: Also written to ``<output_dir>/record.json``.
    """
    cfg = _resolve(cfg)
    wanted = set(STAGES if stages is None else stages)
    unknown = wanted - set(STAGES)
    if unknown:
        raise ConfigError(f"Unknown stages: {', '.join(sorted(unknown))}")
    needs_generator = any(s.needs_generator for s in cfg.attacks.strategies)
    if stages is None:
        if not needs_generator:
            wanted.discard("generator")
        if not cfg.defense.enabled:
            wanted -= {"steganography", "defense"}
    if "attacks" in wanted and needs_generator:
        wanted.add("generator")
    if "defense" in wanted:
        wanted.add("steganography")
    if wanted & {"steganography", "attacks", "defense"}:
        wanted.add("codec")

    run_dir = Path(cfg.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    dump_experiment_config(cfg, run_dir / "config.json")
    record = ExperimentRecord(
        config=to_jsonable(cfg),
        config_hash=config_hash(cfg),
        seed=cfg.seed,
        output_dir=str(run_dir),
    )
    train, test, identities = _load_data(cfg)
    record.identities = identities
    stages_runner = _Stages(record, run_dir, resume)
    logger.info(
        "Run %s: %d train / %d test images, %d identities",
        record.config_hash[:12],
        len(train),
        len(test),
        len(identities),
    )

    id_model: IdentityModel | None = None
    if wanted & {"identity", "codec"}:
        id_model = stages_runner.attempt(  # type: ignore[assignment]
            "identity", train_identity_model, train, cfg.identity,
            stage_generator(cfg.seed, "identity"),
        )
        if id_model is None:
            logger.warning("FPESR will not be reported and the codec trains on pixels only")

    codec: SemanticCodec | None = None
    if "codec" in wanted:
        loss = dataclasses.replace(cfg.codec.loss, feature_net=id_model)
        codec_cfg = dataclasses.replace(cfg.codec, loss=loss)
        sampler = UniformSnrSampler(
            cfg.codec.family, cfg.codec.snr_low_db, cfg.codec.snr_high_db, cfg.codec.pbar
        )
        codec = stages_runner.attempt(  # type: ignore[assignment]
            "codec", train_codec, train.images, sampler, codec_cfg,
            stage_generator(cfg.seed, "codec"), validation=test.images,
        )

    G: Generator | None = None
    if "generator" in wanted:
        G = stages_runner.attempt(  # type: ignore[assignment]
            "generator", train_generator, train.images, cfg.generator,
            stage_generator(cfg.seed, "generator"),
        )

    stegs: dict[ChannelFamily, SignalSteganography] = {}
    if "steganography" in wanted and codec is not None:
        for family in cfg.defense.families:
            steg_cfg = cfg.steganography
            lam3 = (
                cfg.defense.lambda3_rayleigh
                if family is ChannelFamily.RAYLEIGH
                else steg_cfg.loss.lambda3
            )
            steg_loss = dataclasses.replace(
                steg_cfg.loss, lambda3=lam3, lhat_mode=cfg.defense.lhat_mode
            )
            steg = stages_runner.attempt(
                f"steganography_{family.value}", train_steganography, train.images,
                codec, dataclasses.replace(steg_cfg, loss=steg_loss),
                UniformSnrSampler(family, cfg.codec.snr_low_db, cfg.codec.snr_high_db, codec.pbar),
                stage_generator(cfg.seed, "steganography", family.value),
            )
            if steg is not None:
                stegs[family] = steg  # type: ignore[assignment]

    if codec is None:
        return _finish(record)

    picks = stage_generator(cfg.seed, "evaluation")
    n_eval = min(cfg.attacks.n_eval, len(test))
    host_idx = torch.randperm(len(train), generator=picks)[:n_eval]
    probe_idx = torch.randperm(len(train), generator=picks)[: cfg.attacks.config.n_queries]
    ctx = _Context(
        cfg=cfg,
        run_dir=run_dir,
        codec=codec,
        id_model=id_model,
        G=G,
        stegs=stegs,
        x_eval=test.images[:n_eval],
        x_host=train.images[host_idx],
        probes=train.images[probe_idx],
        pool=train.images,
    )
    n_preview = cfg.attacks.n_preview
    torch.save(
        {
            "original": ctx.x_eval[:n_preview].clone(),
            "host": ctx.x_host[:n_preview].clone(),
        },
        run_dir / "eval_samples.pt",
    )

    if "attacks" in wanted:
        _run_grid(_grid(cfg, defended=False), ctx, record)
    else:
        _run_grid([c for c in _grid(cfg, defended=False) if c.strategy == BOB], ctx, record)

    if "defense" in wanted and stegs:
        _run_grid(_grid(cfg, defended=True), ctx, record)
        record.utility = _utility_sweep(ctx)
        pd.DataFrame(record.utility).to_csv(run_dir / "utility.csv", index=False)

    return _finish(record)


def _finish(record: ExperimentRecord) -> ExperimentRecord:
    path = record.save()
    logger.info(
        "Wrote %s (%d reports, %d failures)", path, len(record.reports), len(record.failures)
    )
    return record


def load_reports(record: ExperimentRecord) -> list[MetricReport]:
    """Per-sample reports of a record, read back from their JSONL files."""
    return [MetricReport.load(Path(r["rows_path"])) for r in record.reports]


