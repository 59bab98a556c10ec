"""Checkpoint archives.

A checkpoint is a ``torch.save`` archive with the keys ``kind`` (registered model class),
``init`` (constructor keyword arguments), ``state_dict``, ``shapes`` (parameter name to
shape) and ``metadata``. A steganography checkpoint is the key material shared by sender
and receiver and has to be distributed out of band.
"""

import logging
import pickle
from pathlib import Path
from typing import Any, Final, TypedDict

import torch
from torch import nn

from ._utils import get_timestamp

logger = logging.getLogger(__name__)

FILE_EXTENSION: Final[str] = "ckpt"


def checkpoint_kinds() -> dict[str, type[nn.Module]]:
    from ._attacks import InverseNetwork
    from ._codec import SemanticCodec
    from ._generator import Generator
    from ._metrics import IdentityModel
    from ._steganography import SignalSteganography

    return {
        cls.__name__: cls
        for cls in (
            SemanticCodec,
            Generator,
            IdentityModel,
            SignalSteganography,
            InverseNetwork,
        )
    }


def save_checkpoint(
    module: nn.Module, filename: Path, metadata: dict[str, Any] | None = None
) -> Path | None:
    """Writes ``module`` to ``filename``; returns ``None`` when writing failed."""
    kind = type(module).__name__
    if kind not in checkpoint_kinds():
        raise TypeError(f"{kind} is not a registered checkpoint kind")
    archive = {
        "kind": kind,
        "init": module.init_kwargs,  # type: ignore[attr-defined]
        "state_dict": module.state_dict(),
        "shapes": {k: list(v.shape) for k, v in module.state_dict().items()},
        "metadata": dict(metadata or {}),
    }
    try:
        filename.parent.mkdir(parents=True, exist_ok=True)
        torch.save(archive, filename)
    except (
        pickle.PicklingError,
        TypeError,
        PermissionError,
        FileNotFoundError,
        IsADirectoryError,
        OSError,
        AttributeError,
    ) as e:
        # If saving fails, continue without a checkpoint
        logger.warning("Could not write checkpoint %s: %s", filename, e)
        filename.unlink(missing_ok=True)
        return None
    return filename


def read_checkpoint(filename: Path) -> tuple[nn.Module, dict[str, Any]] | None:
    """Rebuilds the module stored in ``filename``.

    A corrupted or unreadable checkpoint is deleted and ``None`` is returned.
    """
    try:
        archive = torch.load(filename, map_location="cpu", weights_only=True)
        cls = checkpoint_kinds()[archive["kind"]]
        module = cls(**archive["init"])
        module.load_state_dict(archive["state_dict"])
    except (
        pickle.UnpicklingError,
        EOFError,
        FileNotFoundError,
        PermissionError,
        KeyError,
        TypeError,
        RuntimeError,
        OSError,
    ) as e:
        # If the checkpoint is corrupted, remove it and continue
        logger.warning("Discarding unreadable checkpoint %s: %s", filename, e)
        filename.unlink(missing_ok=True)
        return None
    module.eval()
    return module, archive.get("metadata", {})


def load_checkpoint(filename: Path) -> nn.Module:
    """Like :func:`read_checkpoint` but raises when the file cannot be used."""
    loaded = read_checkpoint(Path(filename))
    if loaded is None:
        raise FileNotFoundError(f"No usable checkpoint at {filename}")
    return loaded[0]


class FilenameInfo(TypedDict):
    filename: Path
    timestamp: str
    filename_start: str


def get_checkpoint_filename(
    checkpoint_dir: Path,
    stage: str,
    cache_key: str,
    extension: str = FILE_EXTENSION,
) -> FilenameInfo:
    """Generates the filename info for a stage checkpoint.

    It contains the full filename, the timestamp and the start of the filename used to
    find earlier checkpoints of the same stage call.

    Args:
        checkpoint_dir (Path): Folder where the file will be saved.
        stage (str): Name of the stage.
        cache_key (str): Key of the stage call.
        extension (str, optional): File extension. Defaults to "ckpt".

    Returns:
        FilenameInfo: Filename, timestamp and filename prefix.
    """
    timestamp = get_timestamp()
    return {
        "filename": checkpoint_dir / f"{stage}_{cache_key}_{timestamp}.{extension}",
        "timestamp": timestamp,
        "filename_start": f"{stage}_{cache_key}",
    }
