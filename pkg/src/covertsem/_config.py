import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

from covertsem._errors import ConfigError

logger = logging.getLogger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


@dataclass
class Config:
    """Process-wide runtime settings.

    Attributes:
        cache_dir (Path): Default checkpoint directory of stages built without one.
        resume_enabled (bool): Whether stages reuse a checkpoint with a matching key.
        verbose (bool): Show progress bars.
        log_level (str): Level of the ``covertsem`` logger.
    """

    cache_dir: Path = Path.home() / ".cache" / "covertsem"
    resume_enabled: bool = True
    verbose: bool = True
    log_level: str = "INFO"

    def __post_init__(self) -> None:
        self.cache_dir = Path(self.cache_dir).expanduser()
        self.log_level = str(self.log_level).upper()
        if self.log_level not in LOG_LEVELS:
            raise ConfigError(
                f"log_level must be one of {', '.join(LOG_LEVELS)}, got {self.log_level!r}"
            )


_cfg = Config()


def set_config(**params: Any) -> None:
    """Updates the runtime settings. Unknown keys are ignored with a warning.

    A new ``log_level`` is applied to the ``covertsem`` logger right away.
    """
    global _cfg

    unknown = sorted(k for k in params if not hasattr(_cfg, k))
    if unknown:
        logger.warning("Ignoring unknown config keys: %s", ", ".join(unknown))
    valid = {k: v for k, v in params.items() if k not in unknown}
    _cfg = replace(_cfg, **valid)
    if "log_level" in valid:
        logging.getLogger("covertsem").setLevel(_cfg.log_level)


def get_config() -> Config:
    return _cfg


def enable_resume() -> None:
    """Reuse stage checkpoints found in the checkpoint directory."""
    _cfg.resume_enabled = True


def disable_resume() -> None:
    """Always retrain stages, ignoring existing checkpoints."""
    _cfg.resume_enabled = False
