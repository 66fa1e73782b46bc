"""Self-describing binary container for model parameters and precomputed tables.

Layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON header
(sorted keys), then every array as raw little-endian float64 in header order.
"""

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from tabembed.core.data_loader import FeatureSchema, NormalizationStats
from tabembed.core.embed_cat import CategoricalEmbedder, CategoricalMethod, PrecomputedCache
from tabembed.core.model import EmbeddingModel, ModelConfig
from tabembed.utils.constants import CHECKPOINT_FORMAT_VERSION, CHECKPOINT_MAGIC
from tabembed.utils.errors import ConfigurationError, DataError, StaleCacheError

logger = logging.getLogger(__name__)

_MAGIC = CHECKPOINT_MAGIC.encode("ascii")
_DTYPE = np.dtype("<f8")

KIND_MODEL = "model"
KIND_TABLE = "table"


def _write_container(path: Union[str, Path], header: Dict[str, Any], arrays: Dict[str, np.ndarray]) -> None:
    entries = []
    offset = 0
    for name, values in arrays.items():
        entries.append({"name": name, "shape": list(values.shape), "offset": offset})
        offset += values.size * _DTYPE.itemsize
    header = {**header, "format_version": CHECKPOINT_FORMAT_VERSION, "entries": entries}
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for values in arrays.values():
            fh.write(np.ascontiguousarray(values, dtype=_DTYPE).tobytes())


def _read_container(path: Union[str, Path]) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    try:
        raw = Path(path).read_bytes()
    except FileNotFoundError:
        raise DataError(f"Checkpoint not found: {path}") from None

    if raw[: len(_MAGIC)] != _MAGIC:
        raise DataError(f"{path} is not a tabembed checkpoint")
    start = len(_MAGIC) + 8
    (length,) = struct.unpack("<Q", raw[len(_MAGIC) : start])
    header = json.loads(raw[start : start + length].decode("utf-8"))
    if header.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise DataError(
            f"{path}: unsupported checkpoint format {header.get('format_version')} "
            f"(expected {CHECKPOINT_FORMAT_VERSION})"
        )

    body = start + length
    arrays: Dict[str, np.ndarray] = {}
    for entry in header["entries"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        begin = body + entry["offset"]
        end = begin + count * _DTYPE.itemsize
        if end > len(raw):
            raise DataError(f"{path}: truncated data for '{entry['name']}'")
        arrays[entry["name"]] = np.frombuffer(raw, dtype=_DTYPE, count=count, offset=begin).reshape(shape).copy()
    return header, arrays


@dataclass
class Checkpoint:
    """A model restored from disk together with the preprocessing it was trained with."""

    model: EmbeddingModel
    normalization: Optional[NormalizationStats] = None
    vocabularies: Dict[str, List[str]] = field(default_factory=dict)
    run_config: Dict[str, Any] = field(default_factory=dict)

    @property
    def digest(self) -> str:
        return self.model.digest()


def save_checkpoint(
    model: EmbeddingModel,
    path: Union[str, Path],
    normalization: Optional[NormalizationStats] = None,
    vocabularies: Optional[Dict[str, List[str]]] = None,
    run_config: Optional[Dict[str, Any]] = None,
) -> Path:
    """
    Write every model parameter bit-exactly with the schema, config and version stamp.

    Args:
        model: Model to save
        path: Destination file
        normalization: Training-split statistics to re-apply at inference
        vocabularies: Category strings per field, in index order
        run_config: Configuration that produced the model

    Returns:
        Path written
    """
    header = {
        "kind": KIND_MODEL,
        "schema": model.schema.to_dict(),
        "model_config": model.config.to_dict(),
        "seed": model.seed,
        "version": model.version,
        "digest": model.digest(),
        "hash_seeds": {
            e.name: [int(s) for s in e.hashing.seeds]
            for e in model.categorical
            if e.hashing is not None
        },
        "normalization": normalization.to_dict() if normalization is not None else None,
        "vocabularies": vocabularies or {},
        "run_config": run_config or {},
    }
    _write_container(path, header, model.get_state())
    logger.info("Saved checkpoint %s (version %d)", path, model.version)
    return Path(path)


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """Rebuild the model described by a checkpoint and restore its parameters."""
    header, arrays = _read_container(path)
    if header.get("kind") != KIND_MODEL:
        raise DataError(f"{path} holds a '{header.get('kind')}', not a model")

    schema = FeatureSchema.from_dict(header["schema"])
    model = EmbeddingModel.build(schema, ModelConfig.from_dict(header["model_config"]), header["seed"])
    for e in model.categorical:
        if e.hashing is not None and e.name in header["hash_seeds"]:
            e.hashing.seeds = tuple(int(s) for s in header["hash_seeds"][e.name])
    model.load_state(arrays)
    model.version = header["version"]
    for e in model.categorical:
        e.version = model.version

    if model.digest() != header["digest"]:
        raise DataError(f"{path}: parameter digest mismatch")

    normalization = header.get("normalization")
    return Checkpoint(
        model=model,
        normalization=NormalizationStats.from_dict(normalization) if normalization else None,
        vocabularies=header.get("vocabularies", {}),
        run_config=header.get("run_config", {}),
    )


def save_table(cache: PrecomputedCache, model: EmbeddingModel, path: Union[str, Path]) -> Path:
    """Write a full precomputed table stamped with the model's version and digest."""
    if cache.full_table is None:
        raise ConfigurationError(f"cache for '{cache.field_name}' holds no full table")
    if cache.is_stale():
        cache.refresh()
    header = {
        "kind": KIND_TABLE,
        "field": cache.field_name,
        "version": cache.version,
        "digest": model.digest(),
    }
    _write_container(path, header, {"table": cache.full_table})
    logger.info("Saved %s table for '%s' to %s", cache.full_table.shape, cache.field_name, path)
    return Path(path)


def load_table(path: Union[str, Path], model: EmbeddingModel) -> PrecomputedCache:
    """
    Load a precomputed table for ``model``.

    Raises:
        StaleCacheError: If the table was computed from different parameters
    """
    header, arrays = _read_container(path)
    if header.get("kind") != KIND_TABLE:
        raise DataError(f"{path} holds a '{header.get('kind')}', not a table")

    embedder = model.embedder(header["field"])
    if not isinstance(embedder, CategoricalEmbedder) or embedder.method != CategoricalMethod.DEEP:
        raise ConfigurationError(f"field '{header['field']}' does not use the deep method")
    if header["digest"] != model.digest():
        raise StaleCacheError(
            f"table for '{header['field']}' was computed from other parameters "
            f"(stamp {header['digest'][:12]}, model {model.digest()[:12]}); run precompute again"
        )
    return PrecomputedCache(embedder, embedder.version, full_table=arrays["table"])
