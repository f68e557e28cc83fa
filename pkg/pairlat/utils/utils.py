import hashlib
import json
import os
import tempfile
import time
from functools import wraps
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
import torch
from loguru import logger

from pairlat.errors import ConfigError, PhaseFailure


def phase_wrapper(phase: str) -> Callable:
    """Controls the failure behavior of one experiment phase.

    - logs the traceback so it ends up next to the run's other output
    - re-raises as :class:`PhaseFailure` carrying the phase name; config errors pass through
    - returns ``(result, seconds)``

    Example:
    ```
    @phase_wrapper("audit")
    def audit(experiment) -> dict:
        ...
    ```
    """

    def decorate(task_func: Callable) -> Callable:
        @wraps(task_func)
        def wrap(*args, **kwargs):
            start = time.perf_counter()
            logger.info(f"Starting phase <{phase}>")

            try:
                result = task_func(*args, **kwargs)
            except (PhaseFailure, ConfigError):
                raise
            except Exception as ex:
                logger.exception(f"Phase <{phase}> failed")
                raise PhaseFailure(phase, ex) from ex
            finally:
                elapsed = time.perf_counter() - start
                logger.info(f"Phase <{phase}> finished in {elapsed:.2f}s")

            return result, elapsed

        return wrap

    return decorate


def tensor_content_hash(tensors: Mapping[str, torch.Tensor]) -> str:
    """SHA-256 over names, shapes and little-endian float64 bytes, name-ordered."""

    digest = hashlib.sha256()
    for name in sorted(tensors):
        array = tensors[name].detach().cpu().to(torch.float64).contiguous().numpy()
        digest.update(name.encode("utf-8"))
        digest.update(repr(array.shape).encode("utf-8"))
        digest.update(array.astype("<f8", copy=False).tobytes())
    return digest.hexdigest()


def to_jsonable(value):
    if isinstance(value, Mapping):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, torch.Tensor):
        return to_jsonable(value.detach().cpu().tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return repr(value)
    return value


def dump_json(value) -> str:
    return json.dumps(to_jsonable(value), indent=2, sort_keys=True) + "\n"


def atomic_write_text(path: Path | str, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path
