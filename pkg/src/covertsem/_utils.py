import datetime as dt
import re
from pathlib import Path
from typing import Any

TIMESTAMP_FORMAT = "%Y%m%d_%H%M%S"
_UNSAFE = re.compile(r"[^0-9A-Za-z_]")


def get_stage_name(func: Any) -> str:
    """Filename-safe name of a stage function, e.g. ``covertsem__codec_train_codec``."""
    return _UNSAFE.sub("_", f"{func.__module__}_{func.__qualname__}")


def sanitize(name: str) -> str:
    return _UNSAFE.sub("_", name)


def get_timestamp() -> str:
    return dt.datetime.now().strftime(TIMESTAMP_FORMAT)


def parse_timestamp_from_filename(filename: Path) -> dt.datetime:
    """Reads back the timestamp :func:`get_checkpoint_filename` appends to a stem.

    Args:
        filename (Path): A ``<stage>_<key>_<date>_<time>.<ext>`` checkpoint path.

    Returns:
        dt.datetime: When the checkpoint was written.
    """
    timestamp = "_".join(filename.stem.split("_")[-2:])
    return dt.datetime.strptime(timestamp, TIMESTAMP_FORMAT)


def format_snr(snr_db: float) -> str:
    """Directory-safe SNR label: ``5`` -> ``snr5``, ``-2.5`` -> ``snr-2p5``."""
    text = f"{snr_db:g}".replace(".", "p")
    return f"snr{text}"
