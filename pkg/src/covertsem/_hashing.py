import dataclasses
import hashlib
import inspect
import json
from enum import Enum
from pathlib import Path
from typing import Any, Callable

import torch
from torch import nn


def create_cache_key(
    func: Callable, args: tuple, kwargs: dict, ignore: tuple[str, ...] = ("log",)
) -> str:
    """Create a unique checkpoint key for a stage call.

    Arguments named in ``ignore`` (progress sinks such as the training log) do not take
    part in the key.
    """

    sig = inspect.signature(func)
    bound_args = sig.bind(*args, **kwargs)
    bound_args.apply_defaults()

    args_ = {k: v for k, v in bound_args.arguments.items() if k not in ignore}

    if "self" in args_:
        args_.pop("self")

    key_data = {
        "function": f"{func.__module__}.{func.__qualname__}",
        "args": make_hashable(args_),
    }

    key_str = str(key_data)
    return hashlib.md5(key_str.encode()).hexdigest()


def tensor_digest(tensor: torch.Tensor) -> str:
    t = tensor.detach().cpu().contiguous()
    if t.is_complex():
        t = torch.view_as_real(t)
    payload = t.numpy().tobytes()
    return hashlib.md5(f"{t.dtype}{tuple(t.shape)}".encode() + payload).hexdigest()


def make_hashable(obj: Any) -> Any:
    """Convert objects to a stable, hashable representation for key creation."""
    if isinstance(obj, torch.Tensor):
        return {"type": "Tensor", "shape": tuple(obj.shape), "hash": tensor_digest(obj)}
    elif isinstance(obj, torch.Generator):
        return {"type": "Generator", "hash": tensor_digest(obj.get_state())}
    elif isinstance(obj, nn.Module):
        return {
            "type": type(obj).__name__,
            "state": make_hashable(dict(obj.state_dict())),
        }
    elif isinstance(obj, Enum):
        return obj.value
    elif isinstance(obj, Path):
        return str(obj)
    elif dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return (
            type(obj).__name__,
            tuple(
                (f.name, make_hashable(getattr(obj, f.name)))
                for f in dataclasses.fields(obj)
            ),
        )
    elif isinstance(obj, dict):
        return tuple(sorted((str(k), make_hashable(v)) for k, v in obj.items()))
    elif isinstance(obj, (list, tuple)):
        return tuple(make_hashable(item) for item in obj)
    elif isinstance(obj, set):
        return tuple(sorted(make_hashable(item) for item in obj))
    elif obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    elif inspect.isfunction(obj) or inspect.isclass(obj):
        return f"{obj.__module__}.{obj.__qualname__}"
    elif hasattr(obj, "__dict__"):
        return (type(obj).__name__, make_hashable(vars(obj)))
    else:
        return repr(obj)


def content_hash(path: Path) -> str:
    """Git-style blob SHA-1 of a file: ``sha1(b"blob <size>\\0" + content)``."""
    data = Path(path).read_bytes()
    header = f"blob {len(data)}\0".encode()
    return hashlib.sha1(header + data).hexdigest()


def config_hash(cfg: Any) -> str:
    """SHA-1 of the canonical JSON form of a (dataclass) config tree."""
    payload = json.dumps(to_jsonable(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha1(payload.encode()).hexdigest()


def to_jsonable(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {
            f.name: to_jsonable(getattr(obj, f.name))
            for f in dataclasses.fields(obj)
            if f.compare
        }
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, float) and obj != obj:
        return None
    return obj
