import functools
import logging
from pathlib import Path
from typing import Any, Callable, Protocol, TypeVar, overload

from torch import nn

from ._config import Config
from ._files import (
    FILE_EXTENSION,
    get_checkpoint_filename,
    read_checkpoint,
    save_checkpoint,
)
from ._hashing import create_cache_key
from ._utils import get_stage_name, parse_timestamp_from_filename, sanitize

logger = logging.getLogger(__name__)

F = TypeVar("F", bound=Callable[..., Any])


class CheckpointedStage(Protocol):
    """Protocol for stage functions decorated with @checkpointed"""

    def __call__(self, *args: Any, **kwargs: Any) -> Any: ...
    def clear_cache(self) -> None: ...
    @property
    def checkpoint_dir(self) -> Path: ...
    @property
    def last_checkpoint(self) -> Path | None: ...


@overload
def checkpointed(
    func: F,
) -> CheckpointedStage: ...


@overload
def checkpointed(
    func: None = None,
    *,
    stage: str | None = None,
    checkpoint_dir: Path | str | None = None,
    resume_enabled: bool | None = None,
) -> Callable[[F], CheckpointedStage]: ...


def checkpointed(
    func: F | None = None,
    *,
    stage: str | None = None,
    checkpoint_dir: Path | str | None = None,
    resume_enabled: bool | None = None,
) -> CheckpointedStage | Callable[[F], CheckpointedStage]:
    """Decorator making a training stage resumable from checkpoints.

    The decorated function must return a registered model (codec, generator, identity
    model, steganography module or inverse network). Its arguments are hashed into a key;
    the result is written to ``<stage>_<key>_<timestamp>.ckpt`` and, when resuming is
    enabled, the newest checkpoint with the same key is loaded instead of retraining.

    Examples:
        ```py
        @checkpointed
        def train(...): ...

        train_codec_stage = checkpointed(
            train_codec, stage="codec", checkpoint_dir=run_dir / "checkpoints"
        )
        ```

    Args:
        func (Callable | None): The stage function to decorate.
            If None, the decorator is being used with parameters.
        stage (str | None): Name used in checkpoint filenames. Defaults to the
            function's module and qualified name.
        checkpoint_dir (Path | str | None): Directory for the checkpoints.
            If None, the default from config is used.
        resume_enabled (bool | None): Whether existing checkpoints are reused.
            If None, the default from config is used.

    Returns:
        Callable: The wrapped stage.

    Attributes:
        clear_cache (Callable[[], None]): Removes every checkpoint of this stage.
        checkpoint_dir (Path): Directory in use.
        last_checkpoint (Path | None): Checkpoint written or loaded by the last call.
    """

    def decorator(f: F) -> CheckpointedStage:
        from covertsem._config import get_config

        func_args = _get_defaults_from_config(
            get_config(),
            cache_dir=checkpoint_dir,
            resume_enabled=resume_enabled,
        )
        checkpoint_path = Path(func_args["cache_dir"])
        checkpoint_path.mkdir(parents=True, exist_ok=True)
        stage_name = sanitize(stage) if stage else get_stage_name(f)

        @functools.wraps(f)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            cache_key = create_cache_key(f, args, kwargs)
            filename_info = get_checkpoint_filename(
                checkpoint_path, stage=stage_name, cache_key=cache_key
            )

            if func_args["resume_enabled"]:
                found, module = _try_load_checkpoint(
                    checkpoint_path, filename_info["filename_start"]
                )
                if found is not None:
                    logger.info("Checkpoint hit for %s: '%s'", stage_name, found)
                    wrapper.last_checkpoint = found  # type: ignore[attr-defined]
                    return module

            result = f(*args, **kwargs)

            if isinstance(result, nn.Module):
                saved = save_checkpoint(
                    result,
                    filename_info["filename"],
                    metadata={"stage": stage_name, "key": cache_key},
                )
                wrapper.last_checkpoint = saved  # type: ignore[attr-defined]
            return result

        def clear_cache():
            """Remove all checkpoints of this stage."""
            for file in checkpoint_path.glob(f"{stage_name}_*.{FILE_EXTENSION}"):
                file.unlink(missing_ok=True)

        wrapper.clear_cache = clear_cache  # type: ignore
        wrapper.checkpoint_dir = checkpoint_path  # type: ignore
        wrapper.last_checkpoint = None  # type: ignore

        return wrapper  # type: ignore

    # Handle both @checkpointed and @checkpointed(...) usage
    if func is None:
        return decorator
    else:
        return decorator(func)


def _get_defaults_from_config(config: Config, **kwargs) -> dict:
    """Replaces uninformed values with the corresponding one from the config."""
    result = {}
    for key, value in kwargs.items():
        if value is None:
            result[key] = getattr(config, key)
        else:
            result[key] = value
    return result


def _try_load_checkpoint(
    checkpoint_path: Path, filename_start: str
) -> tuple[Path | None, nn.Module | None]:
    """Loads the newest checkpoint whose name starts with ``filename_start``.

    Args:
        checkpoint_path (Path): Folder to look for checkpoints.
        filename_start (str): ``<stage>_<key>`` prefix of the stage call.

    Returns:
        tuple[Path | None, nn.Module | None]: The file and the rebuilt module, or a
            tuple of None and None.
    """
    candidates = [
        file
        for file in checkpoint_path.glob(f"*.{FILE_EXTENSION}")
        if file.stem.startswith(filename_start)
    ]
    for file in sorted(candidates, key=parse_timestamp_from_filename, reverse=True):
        loaded = read_checkpoint(file)
        if loaded is not None:
            return file, loaded[0]
    return None, None
