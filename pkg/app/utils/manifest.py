import hashlib
import json
from pathlib import Path
from typing import Optional, Union

import numpy as np

from app.errors import ConfigurationError, LabelError
from app.models import ManifestEntry
from app.utils.images import load_binary_pgm
from app.utils.storage import write_jsonl

PathLike = Union[str, Path]


class DatasetManifest:
    """Labeled image entries; relative paths resolve against ``root``"""

    def __init__(self, entries: list[ManifestEntry], root: PathLike, num_classes: int = 3):
        self.entries = list(entries)
        self.root = Path(root)
        self.num_classes = num_classes
        for entry in self.entries:
            if entry.label >= num_classes:
                raise LabelError(f"{entry.path}: label {entry.label} outside 0..{num_classes - 1}")

    @classmethod
    def load(cls, path: PathLike, num_classes: int = 3) -> "DatasetManifest":
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(f"manifest not found: {path}")
        entries = []
        with open(path, "r", encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    entries.append(ManifestEntry.model_validate(json.loads(line)))
        return cls(entries, path.parent, num_classes)

    def save(self, path: PathLike) -> Path:
        return write_jsonl(path, self.entries)

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def class_counts(self, split: str = "train") -> list[int]:
        counts = [0] * self.num_classes
        for entry in self.split(split):
            counts[entry.label] += 1
        return counts

    def resolve(self, entry: ManifestEntry) -> Path:
        path = Path(entry.path)
        return path if path.is_absolute() else self.root / path

    def load_images(self, split: str = "train",
                    entries: Optional[list[ManifestEntry]] = None) -> tuple[np.ndarray, np.ndarray]:
        """(n, H, W) uint8 0/1 images and their labels"""
        entries = self.split(split) if entries is None else entries
        if not entries:
            return np.zeros((0, 0, 0), dtype=np.uint8), np.zeros(0, dtype=np.int64)
        images = np.stack([load_binary_pgm(self.resolve(e)) for e in entries])
        labels = np.array([e.label for e in entries], dtype=np.int64)
        return images, labels

    def digest(self, split: str = "test") -> str:
        """Fingerprint of a split from labels and image bytes, independent of where the files live"""
        digest = hashlib.sha256()
        for entry in self.split(split):
            digest.update(f"{entry.label}\n".encode("utf-8"))
            digest.update(self.resolve(entry).read_bytes())
        return digest.hexdigest()

    def with_entries(self, entries: list[ManifestEntry]) -> "DatasetManifest":
        return DatasetManifest(entries, self.root, self.num_classes)
