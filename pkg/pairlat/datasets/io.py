"""On-disk dataset directories: ``manifest.json`` plus raw little-endian f64 matrices."""

import json
from pathlib import Path

import numpy as np
from loguru import logger

from pairlat.datasets.pair import PairDataset
from pairlat.errors import FormatError
from pairlat.utils.utils import atomic_write_text, dump_json

SCHEMA_VERSION = 1
DTYPE_MARKER = "f64-le"
MANIFEST = "manifest.json"
LATENT_FILE = "latents.bin"

REQUIRED_FIELDS = (
    "schema_version",
    "edge",
    "n",
    "dims",
    "dtype",
    "row_major",
    "files",
    "generator_fingerprint",
)


def matrix_file(m: int) -> str:
    return f"x{m}.bin"


def _write_matrix(path: Path, matrix: np.ndarray) -> None:
    path.write_bytes(np.ascontiguousarray(matrix, dtype="<f8").tobytes(order="C"))


def _read_matrix(path: Path, rows: int, cols: int) -> np.ndarray:
    if not path.is_file():
        raise FormatError(path.name, "file is missing")

    expected = rows * cols * 8
    actual = path.stat().st_size
    if actual != expected:
        raise FormatError(
            path.name,
            f"shape mismatch: ({rows}, {cols}) float64 needs {expected} bytes, "
            f"file has {actual}",
        )
    return np.fromfile(path, dtype="<f8").astype(np.float64).reshape(rows, cols)


def save_dataset(dataset: PairDataset, path: Path | str) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)

    i, j = dataset.edge
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "edge": [i, j],
        "n": len(dataset),
        "dims": {str(i): dataset.x_i.shape[1], str(j): dataset.x_j.shape[1]},
        "dtype": DTYPE_MARKER,
        "row_major": True,
        "files": {str(i): matrix_file(i), str(j): matrix_file(j)},
        "latent_file": None,
        "latent_dim": None,
        "generator_fingerprint": dataset.fingerprint,
    }

    _write_matrix(path / matrix_file(i), dataset.x_i)
    _write_matrix(path / matrix_file(j), dataset.x_j)
    if dataset.has_latents:
        latents = dataset.evaluation_latents()
        _write_matrix(path / LATENT_FILE, latents)
        manifest["latent_file"] = LATENT_FILE
        manifest["latent_dim"] = latents.shape[1]

    atomic_write_text(path / MANIFEST, dump_json(manifest))
    logger.debug(f"Saved edge {dataset.edge} ({len(dataset)} rows) to {path}")
    return path


def _load_manifest(path: Path) -> dict:
    try:
        manifest = json.loads((path / MANIFEST).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise FormatError(MANIFEST, f"no manifest in {path}") from None
    except json.JSONDecodeError as e:
        raise FormatError(MANIFEST, f"malformed JSON: {e}") from e

    if not isinstance(manifest, dict):
        raise FormatError(MANIFEST, "top level must be an object")
    for field in REQUIRED_FIELDS:
        if field not in manifest:
            raise FormatError(field, "missing from manifest")

    if manifest["schema_version"] != SCHEMA_VERSION:
        raise FormatError(
            "schema_version",
            f"unsupported version {manifest['schema_version']}, expected {SCHEMA_VERSION}",
        )
    if manifest["dtype"] != DTYPE_MARKER:
        raise FormatError(
            "dtype", f"endianness/dtype marker {manifest['dtype']!r}, expected {DTYPE_MARKER!r}"
        )
    if manifest["row_major"] is not True:
        raise FormatError("row_major", "only row-major matrices are supported")
    return manifest


def load_dataset(path: Path | str) -> PairDataset:
    path = Path(path)
    manifest = _load_manifest(path)

    edge = manifest["edge"]
    if not (isinstance(edge, list) and len(edge) == 2 and edge[0] < edge[1]):
        raise FormatError("edge", f"expected an ordered pair [i, j], got {edge!r}")
    i, j = (int(m) for m in edge)
    keys = {str(i), str(j)}

    files, dims = manifest["files"], manifest["dims"]
    if set(files) != keys:
        raise FormatError(
            "files", f"manifest edge {{{i},{j}}} but files for modalities {sorted(files)}"
        )
    if set(dims) != keys:
        raise FormatError(
            "dims", f"manifest edge {{{i},{j}}} but dims for modalities {sorted(dims)}"
        )
    for m in (i, j):
        if files[str(m)] != matrix_file(m):
            raise FormatError(
                "files",
                f"modality {m} points at {files[str(m)]!r}, expected {matrix_file(m)!r}",
            )

    n = int(manifest["n"])
    x_i = _read_matrix(path / files[str(i)], n, int(dims[str(i)]))
    x_j = _read_matrix(path / files[str(j)], n, int(dims[str(j)]))

    latents = None
    if manifest.get("latent_file"):
        latents = _read_matrix(
            path / manifest["latent_file"], n, int(manifest["latent_dim"])
        )

    return PairDataset(
        edge=(i, j),
        x_i=x_i,
        x_j=x_j,
        latents=latents,
        fingerprint=manifest["generator_fingerprint"],
    )


def dataset_roundtrip(path: Path | str, dataset: PairDataset) -> PairDataset:
    save_dataset(dataset, path)
    return load_dataset(path)
