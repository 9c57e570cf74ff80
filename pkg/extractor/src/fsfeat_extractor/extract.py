"""Walk an image folder, embed every image with a frozen backbone, and
write the result as an FSFEAT01 feature store with a manifest sidecar.

Dataset layout: `root/<class_name>/<image files>`. Class ids are assigned
by sorted class-directory name and images are processed in sorted filename
order, so the output is deterministic given fixed weights. An optional
split descriptor (JSON: split name -> list of class names) tags each class
as "base" or "novel" in the manifest; the two splits must be disjoint.

The store format matches the engine's reader byte for byte:
magic "FSFEAT01", u32 dim, u32 num_classes, u64 record_count, then
records of u32 class_id + dim little-endian f32 values. Embeddings are
exported raw (unnormalized); normalization is the classifier's job.
"""

from __future__ import annotations

import json
import logging
import os
import struct
from dataclasses import dataclass, field

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .backbone import load_backbone

log = logging.getLogger("fsfeat_extractor")

MAGIC = b"FSFEAT01"
IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp"}


@dataclass
class ExtractionConfig:
    dataset_root: str
    output_path: str
    weights_path: str
    backbone: str = "smallconv"
    resolution: int = 84
    batch_size: int = 32
    device: str = "cpu"
    split_file: str | None = None  # JSON: {"base": [...], "novel": [...]}

    def validate(self) -> None:
        if not os.path.isdir(self.dataset_root):
            raise FileNotFoundError(f"dataset root {self.dataset_root} is not a directory")
        if not os.path.exists(self.weights_path):
            raise FileNotFoundError(f"backbone weights not found: {self.weights_path}")
        if self.resolution < 8:
            raise ValueError(f"resolution too small: {self.resolution}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


@dataclass
class ExtractionSummary:
    num_classes: int = 0
    images_embedded: int = 0
    images_skipped: int = 0
    dim: int = 0
    skipped_files: list[str] = field(default_factory=list)


def load_splits(path, class_names: list[str]) -> dict[str, str]:
    """Map class name -> split tag, defaulting unlisted classes to novel."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    base = set(doc.get("base", []))
    novel = set(doc.get("novel", []))
    overlap = base & novel
    if overlap:
        raise ValueError(f"classes in both base and novel splits: {sorted(overlap)}")
    tags = {}
    for name in class_names:
        tags[name] = "base" if name in base else "novel"
    return tags


def list_classes(root) -> list[str]:
    names = sorted(
        d for d in os.listdir(root) if os.path.isdir(os.path.join(root, d))
    )
    if not names:
        raise ValueError(f"no class directories under {root}")
    return names


def list_images(class_dir) -> list[str]:
    return sorted(
        f
        for f in os.listdir(class_dir)
        if os.path.splitext(f)[1].lower() in IMAGE_EXTENSIONS
    )


def load_image(path, resolution: int) -> np.ndarray:
    """Decode to a CHW float32 array in [-1, 1]."""
    with Image.open(path) as img:
        rgb = img.convert("RGB").resize((resolution, resolution), Image.BILINEAR)
    arr = np.asarray(rgb, dtype=np.float32) / 255.0
    return ((arr - 0.5) / 0.5).transpose(2, 0, 1)


def extract(cfg: ExtractionConfig) -> ExtractionSummary:
    """Embed every readable image under the dataset root and write the store.

    Unreadable images are skipped with a logged warning and counted in the
    summary; missing weights are fatal.
    """
    cfg.validate()
    device = torch.device(cfg.device)
    model = load_backbone(cfg.backbone, cfg.weights_path).to(device)

    class_names = list_classes(cfg.dataset_root)
    split_tags = (
        load_splits(cfg.split_file, class_names)
        if cfg.split_file
        else {name: "novel" for name in class_names}
    )

    summary = ExtractionSummary(num_classes=len(class_names))
    class_ids: list[int] = []
    chunks: list[np.ndarray] = []

    for cid, name in enumerate(class_names):
        class_dir = os.path.join(cfg.dataset_root, name)
        batch: list[np.ndarray] = []

        def flush():
            if not batch:
                return
            with torch.no_grad():
                tensor = torch.from_numpy(np.stack(batch)).to(device)
                feats = model(tensor).cpu().numpy().astype(np.float32)
            chunks.append(feats)
            class_ids.extend([cid] * len(batch))
            summary.images_embedded += len(batch)
            batch.clear()

        for fname in list_images(class_dir):
            path = os.path.join(class_dir, fname)
            try:
                batch.append(load_image(path, cfg.resolution))
            except (OSError, UnidentifiedImageError, ValueError) as exc:
                log.warning("skipping unreadable image %s: %s", path, exc)
                summary.images_skipped += 1
                summary.skipped_files.append(path)
                continue
            if len(batch) >= cfg.batch_size:
                flush()
        flush()

    if not chunks:
        raise ValueError("no readable images found; nothing to export")
    vectors = np.concatenate(chunks)
    summary.dim = vectors.shape[1]

    _write_store(cfg.output_path, vectors, np.asarray(class_ids, dtype=np.uint32),
                 len(class_names))
    _write_manifest(cfg.output_path, class_names, split_tags)
    log.info(
        "wrote %s: %d classes, dim %d, %d embeddings (%d skipped)",
        cfg.output_path, summary.num_classes, summary.dim,
        summary.images_embedded, summary.images_skipped,
    )
    return summary


def _write_store(path, vectors: np.ndarray, class_ids: np.ndarray, num_classes: int) -> None:
    n, dim = vectors.shape
    record = np.dtype([("cid", "<u4"), ("vec", "<f4", (dim,))])
    block = np.empty(n, dtype=record)
    block["cid"] = class_ids
    block["vec"] = vectors
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIQ", dim, num_classes, n))
        fh.write(block.tobytes())


def _write_manifest(store_path, class_names: list[str], split_tags: dict[str, str]) -> None:
    doc = {
        str(cid): {"name": name, "split": split_tags[name]}
        for cid, name in enumerate(class_names)
    }
    with open(f"{os.fspath(store_path)}.manifest.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
