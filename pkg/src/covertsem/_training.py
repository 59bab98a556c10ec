import copy
import logging
import math
import threading
from collections.abc import Iterable, Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Any, TypeVar

import pandas as pd
import torch
from torch import nn
from tqdm import tqdm

from ._config import get_config
from ._errors import TrainingDiverged

logger = logging.getLogger(__name__)

T = TypeVar("T")

# Grid cells build inverse networks from worker threads; the global RNG is shared.
_GLOBAL_RNG_LOCK = threading.Lock()


class TrainingLog:
    """Per-epoch training curve of one stage.

    Rows are plain dicts; :meth:`frame` turns them into a ``pandas.DataFrame``.
    """

    def __init__(self, stage: str) -> None:
        self.stage = stage
        self.rows: list[dict[str, Any]] = []

    def record(self, epoch: int, **values: float) -> None:
        row = {"stage": self.stage, "epoch": epoch, **values}
        self.rows.append(row)
        formatted = ", ".join(f"{k}={v:.6g}" for k, v in values.items())
        logger.info("[%s] epoch %d: %s", self.stage, epoch, formatted)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)

    def column(self, name: str) -> list[float]:
        return [row[name] for row in self.rows if name in row]

    def save(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        self.frame().to_parquet(path, index=False)
        return path


def progress(iterable: Iterable[T], desc: str, total: int | None = None) -> Iterator[T]:
    """Wraps an iterable in a tqdm bar when the runtime config is verbose."""
    yield from tqdm(
        iterable, desc=desc, total=total, leave=False, disable=not get_config().verbose
    )


def snapshot(module: nn.Module) -> dict[str, torch.Tensor]:
    return copy.deepcopy(module.state_dict())


def derive_seed(generator: torch.Generator) -> int:
    return int(torch.randint(0, 2**31 - 1, (), generator=generator))


@contextmanager
def seeded(generator: torch.Generator) -> Iterator[None]:
    """Seeds torch's global RNG from ``generator`` for the block, then restores it.

    Parameter initialisation goes through the global RNG; this keeps it reproducible
    without leaking state into the caller.
    """
    seed = derive_seed(generator)
    with _GLOBAL_RNG_LOCK, torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        yield


@contextmanager
def frozen(module: Any) -> Iterator[None]:
    """Disables gradients of ``module`` inside the block and restores the flags after."""
    if not isinstance(module, nn.Module):
        yield
        return
    flags = [p.requires_grad for p in module.parameters()]
    was_training = module.training
    module.requires_grad_(False)
    module.eval()
    try:
        yield
    finally:
        for p, flag in zip(module.parameters(), flags):
            p.requires_grad_(flag)
        module.train(was_training)


def check_finite(
    loss: torch.Tensor,
    *,
    stage: str,
    epoch: int,
    last_good_state: dict[str, Any] | None,
) -> None:
    """Raises :class:`TrainingDiverged` if ``loss`` is NaN or infinite."""
    value = float(loss.detach())
    if not math.isfinite(value):
        raise TrainingDiverged(
            f"{stage} training diverged at epoch {epoch} (loss={value})",
            epoch=epoch,
            last_good_state=last_good_state,
        )


def batches(n: int, batch_size: int, generator: torch.Generator) -> list[torch.Tensor]:
    """Shuffled index batches covering ``range(n)`` once."""
    order = torch.randperm(n, generator=generator)
    return list(order.split(batch_size))
