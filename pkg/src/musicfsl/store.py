"""Frozen-embedding feature stores: binary I/O and synthetic data generation.

A feature store is an immutable collection of (class_id, vector) records
plus an optional class manifest. Stores are persisted in the FSFEAT01
binary format (little-endian throughout):

    bytes 0-7   magic ASCII "FSFEAT01"
    u32         dim d
    u32         num_classes
    u64         record_count
    then record_count records, each: u32 class_id followed by d f32 values

Vectors are stored as 32-bit floats; all downstream math is done in 64-bit
after loading. The optional manifest is a JSON sidecar `<store>.manifest.json`
mapping class_id -> {"name": ..., "split": "base"|"novel"}.
"""

from __future__ import annotations

import io
import json
import os
import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"FSFEAT01"
_HEADER = struct.Struct("<IIQ")  # dim, num_classes, record_count
_HEADER_SIZE = len(MAGIC) + _HEADER.size

__all__ = [
    "MAGIC",
    "StoreError",
    "StoreFormatError",
    "StoreTruncationError",
    "StoreDataError",
    "StoreWriteError",
    "ConfigError",
    "ClassInfo",
    "FeatureRecord",
    "FeatureStore",
    "SyntheticConfig",
    "read_store",
    "write_store",
    "generate_synthetic",
    "manifest_path",
    "load_manifest",
    "save_manifest",
]


class StoreError(Exception):
    """Base class for feature-store errors."""


class StoreFormatError(StoreError):
    """Malformed container: bad magic, bad header fields, trailing bytes."""


class StoreTruncationError(StoreError):
    """Fewer bytes than the declared record count requires."""


class StoreDataError(StoreError):
    """Well-formed container carrying invalid data (non-finite value,
    out-of-range class id). Carries the offending record index."""

    def __init__(self, message: str, record_index: int | None = None):
        super().__init__(message)
        self.record_index = record_index


class StoreWriteError(StoreError):
    """Sink failure while writing; carries the byte offset reached."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(message)
        self.byte_offset = byte_offset


class ConfigError(ValueError):
    """Invalid synthetic-generation configuration."""


@dataclass(frozen=True)
class ClassInfo:
    """Manifest entry for one class."""

    name: str
    split: str = "novel"


@dataclass(frozen=True)
class FeatureRecord:
    """One embedding: a non-negative class index and a d-dim raw vector."""

    class_id: int
    vector: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float32)
        if vec.ndim != 1:
            raise ValueError(f"record vector must be 1-D, got shape {vec.shape}")
        if not np.all(np.isfinite(vec)):
            raise ValueError("record vector contains non-finite values")
        if self.class_id < 0:
            raise ValueError(f"class_id must be non-negative, got {self.class_id}")
        object.__setattr__(self, "vector", vec)


@dataclass
class FeatureStore:
    """Immutable frozen-embedding dataset.

    Records are kept column-wise (`class_ids`, `vectors`) for fast episode
    sampling; `records` materializes the row view on demand.
    """

    dim: int
    num_classes: int
    class_ids: np.ndarray  # (n,) uint32
    vectors: np.ndarray  # (n, dim) float32, storage precision
    manifest: dict[int, ClassInfo] | None = None

    @classmethod
    def from_records(
        cls,
        dim: int,
        num_classes: int,
        records: list[FeatureRecord],
        manifest: dict[int, ClassInfo] | None = None,
    ) -> "FeatureStore":
        class_ids = np.array([r.class_id for r in records], dtype=np.uint32)
        if records:
            vectors = np.stack([r.vector for r in records]).astype(np.float32)
        else:
            vectors = np.zeros((0, dim), dtype=np.float32)
        store = cls(dim, num_classes, class_ids, vectors, manifest)
        store.validate()
        return store

    @property
    def records(self) -> list[FeatureRecord]:
        return [
            FeatureRecord(int(cid), vec)
            for cid, vec in zip(self.class_ids, self.vectors)
        ]

    def __len__(self) -> int:
        return len(self.class_ids)

    def class_counts(self) -> np.ndarray:
        """Number of records per class, indexed by class id."""
        return np.bincount(self.class_ids, minlength=self.num_classes)

    def indices_of_class(self, class_id: int) -> np.ndarray:
        return np.flatnonzero(self.class_ids == class_id)

    def validate(self) -> None:
        if self.dim <= 0:
            raise ValueError(f"dim must be positive, got {self.dim}")
        if self.num_classes <= 0:
            raise ValueError(f"num_classes must be positive, got {self.num_classes}")
        if self.vectors.shape != (len(self.class_ids), self.dim):
            raise ValueError(
                f"vectors shape {self.vectors.shape} inconsistent with "
                f"{len(self.class_ids)} records of dim {self.dim}"
            )
        if not np.all(np.isfinite(self.vectors)):
            bad = int(np.flatnonzero(~np.isfinite(self.vectors).all(axis=1))[0])
            raise ValueError(f"non-finite vector at record {bad}")
        if len(self.class_ids) and int(self.class_ids.max()) >= self.num_classes:
            bad = int(np.flatnonzero(self.class_ids >= self.num_classes)[0])
            raise ValueError(
                f"record {bad} has class_id {int(self.class_ids[bad])} "
                f">= num_classes {self.num_classes}"
            )
        if self.manifest is not None:
            missing = set(np.unique(self.class_ids).tolist()) - set(self.manifest)
            if missing:
                raise ValueError(f"classes missing from manifest: {sorted(missing)}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureStore):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.num_classes == other.num_classes
            and self.class_ids.tobytes() == other.class_ids.tobytes()
            and self.vectors.tobytes() == other.vectors.tobytes()
            and self.manifest == other.manifest
        )


@dataclass(frozen=True)
class SyntheticConfig:
    """Parameters for the Gaussian-blob stand-in dataset.

    Class means are mutually orthogonal unit vectors scaled by `separation`
    (pairwise mean distance sqrt(2) * separation); each sample is its class
    mean plus isotropic Gaussian noise of scale `noise_sigma`.
    """

    num_classes: int
    dim: int
    samples_per_class: int
    separation: float = 4.0
    noise_sigma: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.num_classes <= 0:
            raise ConfigError(f"num_classes must be positive, got {self.num_classes}")
        if self.dim <= 0:
            raise ConfigError(f"dim must be positive, got {self.dim}")
        if self.samples_per_class <= 0:
            raise ConfigError(
                f"samples_per_class must be positive, got {self.samples_per_class}"
            )
        if not self.separation > 0:
            raise ConfigError(f"separation must be > 0, got {self.separation}")
        if not self.noise_sigma > 0:
            raise ConfigError(f"noise_sigma must be > 0, got {self.noise_sigma}")
        if self.dim < self.num_classes:
            raise ConfigError(
                f"orthogonal class means need dim >= num_classes, "
                f"got dim={self.dim} < num_classes={self.num_classes}"
            )


def write_store(store: FeatureStore, destination) -> None:
    """Serialize `store` to FSFEAT01 bytes.

    `destination` is a filesystem path or a writable binary file object.
    When given a path, the manifest (if any) is written alongside as
    `<path>.manifest.json`. Raises StoreWriteError with the byte offset
    reached on sink failure.
    """
    store.validate()
    if isinstance(destination, (str, os.PathLike)):
        with open(destination, "wb") as sink:
            _write_stream(store, sink)
        if store.manifest is not None:
            save_manifest(store.manifest, manifest_path(destination))
        return
    _write_stream(store, destination)


def _write_stream(store: FeatureStore, sink) -> None:
    offset = 0

    def put(chunk: bytes) -> None:
        nonlocal offset
        try:
            sink.write(chunk)
        except OSError as exc:
            raise StoreWriteError(
                f"write failed at byte offset {offset}: {exc}", offset
            ) from exc
        offset += len(chunk)

    put(MAGIC)
    put(_HEADER.pack(store.dim, store.num_classes, len(store)))
    if len(store):
        block = np.empty(len(store), dtype=_record_dtype(store.dim))
        block["cid"] = store.class_ids
        block["vec"] = store.vectors
        put(block.tobytes())


def _record_dtype(dim: int) -> np.dtype:
    return np.dtype([("cid", "<u4"), ("vec", "<f4", (dim,))])


def read_store(source) -> FeatureStore:
    """Parse FSFEAT01 bytes into a validated FeatureStore.

    `source` is a filesystem path, a readable binary file object, or raw
    bytes. Trailing garbage is rejected. When given a path, a sidecar
    manifest is picked up automatically if present.
    """
    sidecar = None
    if isinstance(source, (str, os.PathLike)):
        sidecar = manifest_path(source)
        with open(source, "rb") as fh:
            data = fh.read()
    elif isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    else:
        data = source.read()

    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise StoreFormatError(
            f"bad magic: expected {MAGIC!r}, got {data[:len(MAGIC)]!r}"
        )
    if len(data) < _HEADER_SIZE:
        raise StoreTruncationError(
            f"header truncated: {len(data)} bytes < {_HEADER_SIZE}"
        )
    dim, num_classes, count = _HEADER.unpack_from(data, len(MAGIC))
    if dim == 0:
        raise StoreFormatError("header declares dim 0")
    if num_classes == 0:
        raise StoreFormatError("header declares num_classes 0")

    expected = _HEADER_SIZE + count * (4 + 4 * dim)
    if len(data) < expected:
        raise StoreTruncationError(
            f"declared {count} records need {expected} bytes, got {len(data)}"
        )
    if len(data) > expected:
        raise StoreFormatError(f"{len(data) - expected} trailing bytes after records")

    raw = np.frombuffer(data, dtype=_record_dtype(dim), count=count, offset=_HEADER_SIZE)
    class_ids = raw["cid"].astype(np.uint32)
    vectors = (
        raw["vec"].astype(np.float32, copy=True)
        if count
        else np.zeros((0, dim), dtype=np.float32)
    )

    finite_rows = np.isfinite(vectors).all(axis=1)
    if not finite_rows.all():
        bad = int(np.flatnonzero(~finite_rows)[0])
        raise StoreDataError(f"non-finite value in record {bad}", record_index=bad)
    if count and int(class_ids.max()) >= num_classes:
        bad = int(np.flatnonzero(class_ids >= num_classes)[0])
        raise StoreDataError(
            f"record {bad} has class_id {int(class_ids[bad])} "
            f">= num_classes {num_classes}",
            record_index=bad,
        )

    manifest = None
    if sidecar is not None and os.path.exists(sidecar):
        manifest = load_manifest(sidecar)

    store = FeatureStore(int(dim), int(num_classes), class_ids, vectors, manifest)
    store.validate()
    return store


def store_to_bytes(store: FeatureStore) -> bytes:
    buf = io.BytesIO()
    write_store(store, buf)
    return buf.getvalue()


def manifest_path(store_path) -> str:
    return f"{os.fspath(store_path)}.manifest.json"


def save_manifest(manifest: dict[int, ClassInfo], path) -> None:
    doc = {
        str(cid): {"name": info.name, "split": info.split}
        for cid, info in sorted(manifest.items())
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(path) -> dict[int, ClassInfo]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise StoreFormatError(f"manifest {path} is not valid JSON: {exc}") from exc
    manifest = {}
    for key, entry in doc.items():
        try:
            manifest[int(key)] = ClassInfo(
                name=str(entry["name"]), split=str(entry.get("split", "novel"))
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise StoreFormatError(f"bad manifest entry {key!r}: {exc}") from exc
    return manifest


def generate_synthetic(cfg: SyntheticConfig) -> FeatureStore:
    """Deterministic Gaussian-blob store, a pure function of `cfg`.

    Class k's mean is `separation * e_k` (standard basis), so means are
    mutually orthogonal with equal pairwise distances.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed & 0xFFFF_FFFF_FFFF_FFFF)
    n = cfg.num_classes * cfg.samples_per_class

    means = np.zeros((cfg.num_classes, cfg.dim))
    means[np.arange(cfg.num_classes), np.arange(cfg.num_classes)] = cfg.separation

    noise = rng.standard_normal((n, cfg.dim)) * cfg.noise_sigma
    vectors = (np.repeat(means, cfg.samples_per_class, axis=0) + noise).astype(
        np.float32
    )
    class_ids = np.repeat(
        np.arange(cfg.num_classes, dtype=np.uint32), cfg.samples_per_class
    )
    manifest = {
        k: ClassInfo(name=f"synth_{k:03d}", split="novel")
        for k in range(cfg.num_classes)
    }
    return FeatureStore(cfg.dim, cfg.num_classes, class_ids, vectors, manifest)


def class_means(cfg: SyntheticConfig) -> np.ndarray:
    """The exact class means generate_synthetic builds samples around."""
    means = np.zeros((cfg.num_classes, cfg.dim))
    means[np.arange(cfg.num_classes), np.arange(cfg.num_classes)] = cfg.separation
    return means
