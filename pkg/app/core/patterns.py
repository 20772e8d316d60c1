"""
Synthetic periodic topographies: rasterized unit cells tiled into binary
images, labeled by feature-coverage bands, with configurable class imbalance.
"""
import bisect
import logging
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import ndimage

from app.config import settings
from app.errors import ConfigurationError, ContractError, PatternSpecError
from app.models import DescriptorRecord, ManifestEntry
from app.schemas import ImbalanceProfile
from app.utils.images import save_binary_pgm
from app.utils.manifest import DatasetManifest
from app.utils.storage import write_json

logger = logging.getLogger(__name__)

# Train counts and balanced test sizes of the three screening datasets
PROFILES: dict[str, ImbalanceProfile] = {
    "aeruginosa": ImbalanceProfile(train_counts=[700, 387, 224], test_per_class=180),
    "aureus": ImbalanceProfile(train_counts=[469, 927, 236], test_per_class=150),
    "macrophage": ImbalanceProfile(train_counts=[1448, 190, 42], test_per_class=40),
}

DEFAULT_COVERAGE_BANDS = [0.15, 0.35]


class ShapeSpec(BaseModel):
    """A primitive shape inside a unit cell; coordinates are (row, col) in pixels"""
    kind: Literal["circle", "rectangle", "triangle"]
    center: tuple[float, float]
    size: tuple[float, float] = Field(..., description="(height, width); circles use height as diameter")

    model_config = ConfigDict(extra="forbid")

    def bounds(self) -> tuple[float, float, float, float]:
        cy, cx = self.center
        h, w = self.size
        if self.kind == "circle":
            w = h
        return cy - h / 2.0, cy + h / 2.0, cx - w / 2.0, cx + w / 2.0


class UnitCellSpec(BaseModel):
    """A square unit cell made of primitive shapes"""
    cell_side: int = Field(..., ge=4)
    shapes: list[ShapeSpec] = Field(default_factory=list)
    seed: int = 0

    model_config = ConfigDict(extra="forbid")

    @classmethod
    def random(cls, cell_side: int, seed: int, max_shapes: int = 4, min_shapes: int = 1) -> "UnitCellSpec":
        rng = np.random.default_rng(seed)
        shapes = []
        for _ in range(int(rng.integers(min_shapes, max_shapes + 1))):
            kind = ("circle", "rectangle", "triangle")[int(rng.integers(3))]
            h = float(rng.integers(2, cell_side + 1))
            w = h if kind == "circle" else float(rng.integers(2, cell_side + 1))
            cy = float(rng.uniform(h / 2.0, cell_side - h / 2.0))
            cx = float(rng.uniform(w / 2.0, cell_side - w / 2.0))
            shapes.append(ShapeSpec(kind=kind, center=(cy, cx), size=(h, w)))
        return cls(cell_side=cell_side, shapes=shapes, seed=seed)


def _rasterize(shape: ShapeSpec, py: np.ndarray, px: np.ndarray) -> np.ndarray:
    cy, cx = shape.center
    h, w = shape.size
    if shape.kind == "rectangle":
        # half-open spans contain exactly h (w) pixel centers for integer sizes
        return (py >= cy - h / 2) & (py < cy + h / 2) & (px >= cx - w / 2) & (px < cx + w / 2)
    if shape.kind == "circle":
        r = h / 2.0
        return (py - cy) ** 2 + (px - cx) ** 2 <= r * r
    # isosceles triangle, apex up
    apex = (cy - h / 2, cx)
    left = (cy + h / 2, cx - w / 2)
    right = (cy + h / 2, cx + w / 2)

    def edge(a, b):
        return (b[1] - a[1]) * (py - a[0]) - (b[0] - a[0]) * (px - a[1])
    e1, e2, e3 = edge(apex, left), edge(left, right), edge(right, apex)
    return ((e1 >= 0) & (e2 >= 0) & (e3 >= 0)) | ((e1 <= 0) & (e2 <= 0) & (e3 <= 0))


def render_unit_cell(spec: UnitCellSpec) -> np.ndarray:
    """c x c binary cell: union of the shapes, tested at pixel centers"""
    c = spec.cell_side
    py, px = np.mgrid[0:c, 0:c] + 0.5
    cell = np.zeros((c, c), dtype=bool)
    for i, shape in enumerate(spec.shapes):
        top, bottom, left, right = shape.bounds()
        if top < 0 or left < 0 or bottom > c or right > c:
            raise PatternSpecError(f"shape {i} ({shape.kind}) extends outside the {c}x{c} cell")
        cell |= _rasterize(shape, py, px)
    return cell.astype(np.uint8)


def tile(cell: np.ndarray, p: int) -> np.ndarray:
    """Repeat a cell p times along each axis: out[i, j] = cell[i mod c, j mod c]"""
    if p < 1:
        raise ContractError(f"repetition count must be >= 1, got {p}")
    side = max(cell.shape) * p
    if side > settings.MAX_IMAGE_SIDE:
        raise PatternSpecError(f"tiled side {side} exceeds MAX_IMAGE_SIDE={settings.MAX_IMAGE_SIDE}")
    return np.tile(cell, (p, p))


def compute_descriptors(img: np.ndarray) -> DescriptorRecord:
    foreground = int(np.count_nonzero(img))
    # default structuring element in 2-D is the 4-connected cross
    _, count = ndimage.label(img)
    return DescriptorRecord(
        feature_coverage=foreground / img.size,
        mean_feature_area=foreground / count if count else 0.0,
        feature_count=int(count),
    )


def label_for_coverage(coverage: float, bands: list[float]) -> int:
    return bisect.bisect_right(bands, coverage)


class DatasetConfig(BaseModel):
    """Schema for synthetic dataset generation"""
    profile: Literal["balanced", "aeruginosa", "aureus", "macrophage", "custom"] = "balanced"
    n_per_class: int = Field(100, ge=0, description="Train count per class for the balanced profile")
    train_counts: Optional[list[int]] = Field(None, description="Per-class train counts for the custom profile")
    test_per_class: Optional[int] = Field(None, ge=0, description="Overrides the profile's test size")
    profile_scale: float = Field(1.0, gt=0.0, description="Multiplies every count (rounded, minimum 1)")
    image_side: int = Field(64, ge=4)
    cell_side: int = Field(8, ge=4)
    coverage_bands: list[float] = Field(default_factory=lambda: list(DEFAULT_COVERAGE_BANDS))
    max_shapes: int = Field(4, ge=1)
    label_noise: float = Field(0.0, ge=0.0, lt=1.0)
    pixel_flip_noise: float = Field(0.0, ge=0.0, lt=0.5)
    max_rejections: int = Field(5000, ge=1, description="Consecutive rejections before a band is declared unreachable")
    seed: int = 0

    model_config = ConfigDict(extra="forbid")

    @field_validator("coverage_bands")
    @classmethod
    def _increasing_bands(cls, bands: list[float]) -> list[float]:
        if any(not 0.0 < b < 1.0 for b in bands) or any(a >= b for a, b in zip(bands, bands[1:])):
            raise ValueError("coverage_bands must be strictly increasing values inside (0, 1)")
        return bands

    @model_validator(mode="after")
    def _tiling_geometry(self) -> "DatasetConfig":
        if self.image_side % self.cell_side != 0:
            raise ValueError(f"image_side {self.image_side} is not a multiple of cell_side {self.cell_side}")
        if self.profile == "custom" and not self.train_counts:
            raise ValueError("custom profile needs train_counts")
        if self.train_counts is not None and len(self.train_counts) != self.num_classes:
            raise ValueError(f"train_counts needs {self.num_classes} entries (one per coverage band)")
        return self

    @property
    def num_classes(self) -> int:
        return len(self.coverage_bands) + 1

    @property
    def period(self) -> int:
        return self.image_side // self.cell_side

    def resolve_profile(self) -> ImbalanceProfile:
        if self.profile == "custom":
            base = ImbalanceProfile(train_counts=list(self.train_counts), test_per_class=self.test_per_class or 0)
        elif self.profile == "balanced":
            base = ImbalanceProfile(train_counts=[self.n_per_class] * self.num_classes,
                                    test_per_class=self.n_per_class // 4)
        else:
            base = PROFILES[self.profile]
            if len(base.train_counts) != self.num_classes:
                raise ConfigurationError(f"profile {self.profile} needs {len(base.train_counts)} classes")
        test = base.test_per_class if self.test_per_class is None else self.test_per_class

        def scaled(n: int) -> int:
            return n if self.profile_scale == 1.0 or n == 0 else max(1, int(round(n * self.profile_scale)))
        return ImbalanceProfile(train_counts=[scaled(n) for n in base.train_counts],
                                test_per_class=scaled(test))


class DatasetMetadata(BaseModel):
    """Written next to the manifest so training knows the true period"""
    config: DatasetConfig
    period: int
    num_classes: int
    train_counts: list[int]
    test_counts: list[int]


def synthesize_image(config: DatasetConfig, sample_seed: int) -> np.ndarray:
    spec = UnitCellSpec.random(config.cell_side, sample_seed, max_shapes=config.max_shapes)
    img = tile(render_unit_cell(spec), config.period)
    if config.pixel_flip_noise > 0:
        flips = np.random.default_rng([sample_seed, 1]).random(img.shape) < config.pixel_flip_noise
        img = np.where(flips, 1 - img, img).astype(np.uint8)
    return img


def synth_dataset(config: DatasetConfig, out_dir: Union[str, Path]) -> DatasetManifest:
    """
    Rejection-sample random unit cells until every (split, class) slot is filled

    Args:
        config: Dataset configuration
        out_dir: Directory receiving images, manifest.jsonl and dataset.json

    Returns:
        DatasetManifest: Entries in sample-index order
    """
    out_dir = Path(out_dir)
    profile = config.resolve_profile()
    rng = np.random.default_rng(config.seed)
    entries: list[ManifestEntry] = []
    plan = [("train", list(profile.train_counts)),
            ("test", [profile.test_per_class] * config.num_classes)]
    logger.info(f"[SYNTH] Generating {sum(profile.train_counts)} train / "
                f"{profile.test_per_class * config.num_classes} test images "
                f"({config.image_side}px, cell {config.cell_side}px, p={config.period})")

    index = 0
    for split, needed in plan:
        needed = list(needed)
        rejections = 0
        while any(needed):
            sample_seed = int(rng.integers(2 ** 31 - 1))
            img = synthesize_image(config, sample_seed)
            descriptors = compute_descriptors(img)
            target = label_for_coverage(descriptors.feature_coverage, config.coverage_bands)
            if config.label_noise > 0 and rng.random() < config.label_noise:
                others = [c for c in range(config.num_classes) if c != target]
                target = others[int(rng.integers(len(others)))]
            if needed[target] == 0:
                rejections += 1
                if rejections > config.max_rejections:
                    missing = [c for c, n in enumerate(needed) if n]
                    raise ConfigurationError(
                        f"coverage band(s) for class {missing} unreachable after "
                        f"{config.max_rejections} consecutive rejections")
                continue
            rejections = 0
            needed[target] -= 1
            rel_path = f"{split}/{index:06d}_c{target}.pgm"
            save_binary_pgm(out_dir / rel_path, img)
            entries.append(ManifestEntry(
                path=rel_path,
                label=target,
                coverage=descriptors.feature_coverage,
                mean_feature_area=descriptors.mean_feature_area,
                feature_count=descriptors.feature_count,
                seed=sample_seed,
                split=split,
            ))
            index += 1

    manifest = DatasetManifest(entries, out_dir, config.num_classes)
    manifest.save(out_dir / "manifest.jsonl")
    write_json(out_dir / "dataset.json", DatasetMetadata(
        config=config,
        period=config.period,
        num_classes=config.num_classes,
        train_counts=manifest.class_counts("train"),
        test_counts=manifest.class_counts("test"),
    ))
    logger.info(f"[SYNTH] Wrote {len(entries)} images to {out_dir}")
    return manifest


def load_dataset_metadata(manifest_path: Union[str, Path]) -> Optional[DatasetMetadata]:
    path = Path(manifest_path).parent / "dataset.json"
    if not path.is_file():
        return None
    return DatasetMetadata.model_validate_json(path.read_text(encoding="utf-8"))
