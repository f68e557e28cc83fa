from pathlib import Path

from filelock import FileLock, Timeout

from pairlat.errors import ConfigError

LOCK_NAME = ".pairlat.lock"


def run_lock(output_dir: Path | str) -> FileLock:
    """Exclusive ownership of an output directory for the duration of a run."""

    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    lock = FileLock(str(output_dir / LOCK_NAME), timeout=0)
    try:
        lock.acquire()
    except Timeout as ex:
        raise ConfigError(f"Output directory {output_dir} is locked by another run") from ex
    return lock
