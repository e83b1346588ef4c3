"""Labeled 50x50 patch ingestion, splitting, folding, and synthesis.

Patches travel as PNG files referenced from a manifest CSV. The manifest
is headerless: ``relative_path,label`` with label tokens ``healthy`` or
``lesion``; extra trailing columns (annotator, timestamp) are tolerated
and preserved by writers but ignored here. Paths are resolved relative to
the manifest's directory and double as the sample's source id.

Pixels are normalized exactly as value/255, which is invertible back to
the original byte for every 8-bit value. All randomized operations
(splitting, folding, synthesis) are pure functions of (input, seed).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, DatasetError
from .tensor import Tensor

PATCH_SIDE = 50
LABELS = {"healthy": 0, "lesion": 1}
LABEL_NAMES = {0: "healthy", 1: "lesion"}


@dataclass(frozen=True)
class PatchSample:
    """One 50x50 RGB patch: pixels in [0,1], binary label, origin string."""

    pixels: Tensor
    label: int
    source_id: str

    def __post_init__(self) -> None:
        if tuple(self.pixels.shape) != (PATCH_SIDE, PATCH_SIDE, 3):
            raise DatasetError(
                f"{self.source_id}: patch must be {PATCH_SIDE}x{PATCH_SIDE}x3, "
                f"got {tuple(self.pixels.shape)}"
            )
        if self.label not in (0, 1):
            raise DatasetError(f"{self.source_id}: label must be 0 or 1, got {self.label!r}")


@dataclass
class PatchDataset:
    """An ordered list of samples plus the manifest they came from."""

    samples: list[PatchSample]
    manifest_path: str = ""
    _images: Tensor | None = field(default=None, repr=False, compare=False)
    _labels: Tensor | None = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.samples)

    def images(self) -> Tensor:
        """All patches stacked as (N, 50, 50, 3), cached after first use."""
        if self._images is None:
            if not self.samples:
                self._images = np.zeros((0, PATCH_SIDE, PATCH_SIDE, 3))
            else:
                self._images = np.stack([s.pixels for s in self.samples])
        return self._images

    def labels(self) -> Tensor:
        if self._labels is None:
            self._labels = np.array([float(s.label) for s in self.samples])
        return self._labels

    def class_counts(self) -> dict[str, int]:
        counts = {"healthy": 0, "lesion": 0}
        for s in self.samples:
            counts[LABEL_NAMES[s.label]] += 1
        return counts

    def subset(self, indices) -> "PatchDataset":
        return PatchDataset([self.samples[int(i)] for i in indices], self.manifest_path)


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.70
    val: float = 0.20
    test: float = 0.10
    seed: int = 0

    def __post_init__(self) -> None:
        fractions = (self.train, self.val, self.test)
        if any(f <= 0 for f in fractions):
            raise ConfigError(f"split fractions must be positive, got {fractions}")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {fractions}")


@dataclass(frozen=True)
class FoldAssignment:
    """k plus a per-sample fold index in [0, k)."""

    k: int
    assignments: Tensor

    def fold_sizes(self) -> list[int]:
        return [int(np.sum(self.assignments == f)) for f in range(self.k)]

    def test_indices(self, fold: int) -> Tensor:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> Tensor:
        return np.flatnonzero(self.assignments != fold)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


# --- PNG and manifest IO ---


def load_patch_png(path) -> Tensor:
    """Decode an 8-bit RGB PNG into a float (H, W, 3) array scaled by 1/255."""
    try:
        with Image.open(path) as img:
            if img.mode != "RGB":
                raise DatasetError(f"{path}: expected 8-bit RGB, got mode {img.mode!r}")
            data = np.asarray(img, dtype=np.float64)
    except FileNotFoundError as exc:
        raise DatasetError(f"{path}: file not found") from exc
    except (OSError, SyntaxError) as exc:
        raise DatasetError(f"{path}: cannot decode PNG: {exc}") from exc
    return data / 255.0


def save_patch_png(path, pixels: Tensor) -> None:
    """Encode a float [0,1] (H, W, 3) array as an 8-bit RGB PNG."""
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise DatasetError(f"{path}: pixels must be (H, W, 3), got {tuple(pixels.shape)}")
    data = np.clip(np.rint(pixels * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path, format="PNG")


def load_image_rgb(path) -> Tensor:
    """Decode an 8-bit RGB PNG of any size as a uint8 (H, W, 3) array."""
    try:
        with Image.open(path) as img:
            if img.mode != "RGB":
                raise DatasetError(f"{path}: expected 8-bit RGB, got mode {img.mode!r}")
            return np.asarray(img, dtype=np.uint8)
    except FileNotFoundError as exc:
        raise DatasetError(f"{path}: file not found") from exc
    except (OSError, SyntaxError) as exc:
        raise DatasetError(f"{path}: cannot decode PNG: {exc}") from exc


def save_image_rgb(path, pixels: Tensor) -> None:
    """Encode a uint8 (H, W, 3) array as a PNG."""
    if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.dtype != np.uint8:
        raise DatasetError(
            f"{path}: need a uint8 (H, W, 3) array, got {pixels.dtype} {tuple(pixels.shape)}"
        )
    Image.fromarray(pixels, mode="RGB").save(path, format="PNG")


def read_manifest(manifest_path) -> list[tuple[str, str]]:
    """Parse manifest rows into (relative_path, label) pairs, order preserved.

    Rows need at least two columns; extras are ignored. Bad labels, blank
    paths, and duplicate paths raise DatasetError naming the row.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise DatasetError(f"manifest not found: {manifest_path}")
    rows: list[tuple[str, str]] = []
    seen: set[str] = set()
    with open(manifest_path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 2:
                raise DatasetError(f"{manifest_path}:{lineno}: need relative_path,label, got {row!r}")
            rel, label = row[0].strip(), row[1].strip()
            if not rel:
                raise DatasetError(f"{manifest_path}:{lineno}: empty path")
            if label not in LABELS:
                raise DatasetError(
                    f"{manifest_path}:{lineno}: label must be healthy or lesion, got {label!r}"
                )
            if rel in seen:
                raise DatasetError(f"{manifest_path}:{lineno}: duplicate patch path {rel!r}")
            seen.add(rel)
            rows.append((rel, label))
    return rows


def load_dataset(manifest_path) -> PatchDataset:
    """Load every patch a manifest references, in manifest order."""
    manifest_path = Path(manifest_path)
    rows = read_manifest(manifest_path)
    base = manifest_path.parent
    samples: list[PatchSample] = []
    for rel, label in rows:
        pixels = load_patch_png(base / rel)
        if tuple(pixels.shape) != (PATCH_SIDE, PATCH_SIDE, 3):
            raise DatasetError(
                f"{rel}: patch images must be {PATCH_SIDE}x{PATCH_SIDE}, "
                f"got {pixels.shape[1]}x{pixels.shape[0]}"
            )
        samples.append(PatchSample(pixels=pixels, label=LABELS[label], source_id=rel))
    return PatchDataset(samples, manifest_path=str(manifest_path))


def write_dataset(ds: PatchDataset, out_dir, manifest_name: str = "manifest.csv") -> Path:
    """Write every sample as <label>/<source_id>.png plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / manifest_name
    with open(manifest_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for s in ds.samples:
            label = LABEL_NAMES[s.label]
            rel = f"{label}/{s.source_id}.png" if "/" not in s.source_id else s.source_id
            target = out_dir / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            save_patch_png(target, s.pixels)
            writer.writerow([rel, label])
    return manifest_path


# --- deterministic partitioning ---


def split(ds: PatchDataset, spec: SplitSpec) -> tuple[PatchDataset, PatchDataset, PatchDataset]:
    """Stratified (train, val, test) split; exact partition, seeded shuffle.

    Within each class the val and test sizes are the half-up-rounded
    fractions; the remainder goes to train. Sample order inside each part
    follows the original dataset order.
    """
    if len(ds) < 10:
        raise DatasetError(f"dataset of {len(ds)} samples is too small to split (need >= 10)")
    rng = np.random.default_rng(spec.seed)
    labels = ds.labels()
    train_idx: list[int] = []
    val_idx: list[int] = []
    test_idx: list[int] = []
    for cls in (0, 1):
        members = np.flatnonzero(labels == cls)
        if members.size == 0:
            continue
        shuffled = members[rng.permutation(members.size)]
        n_val = _round_half_up(spec.val * members.size)
        n_test = _round_half_up(spec.test * members.size)
        n_test = min(n_test, members.size - n_val)
        val_idx.extend(shuffled[:n_val])
        test_idx.extend(shuffled[n_val : n_val + n_test])
        train_idx.extend(shuffled[n_val + n_test :])
    return (
        ds.subset(sorted(train_idx)),
        ds.subset(sorted(val_idx)),
        ds.subset(sorted(test_idx)),
    )


def kfold(ds: PatchDataset, k: int, seed: int = 0) -> FoldAssignment:
    """Stratified fold assignment: fold sizes differ by at most one.

    Per class the shuffled members are dealt round-robin over folds, with
    the dealing position carried across classes so no fold collects the
    remainder of every class.
    """
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    if k > len(ds):
        raise ConfigError(f"k={k} exceeds the dataset size {len(ds)}")
    rng = np.random.default_rng(seed)
    labels = ds.labels()
    assignments = np.full(len(ds), -1, dtype=np.int64)
    offset = 0
    for cls in (0, 1):
        members = np.flatnonzero(labels == cls)
        if members.size == 0:
            continue
        shuffled = members[rng.permutation(members.size)]
        for pos, idx in enumerate(shuffled):
            assignments[idx] = (offset + pos) % k
        offset = (offset + members.size) % k
    return FoldAssignment(k=k, assignments=assignments)


# --- synthetic patch generation ---
#
# Stand-in for the private clinic corpus. "Healthy" is a smooth skin-tone
# field: a per-patch base color with jittered brightness, a random linear
# ramp, and low-amplitude Gaussian noise. "Lesion" adds a soft elliptical
# blob that darkens the patch and shifts it toward red (green and blue
# drop faster than red). Base-brightness jitter is wide enough that mean
# intensity alone does not separate the classes, so the task is learnable
# but not trivially linear.

_BASE_TONE = np.array([0.80, 0.62, 0.52])
_NOISE_SIGMA = 0.015


def _skin_field(rng: np.random.Generator) -> Tensor:
    brightness = rng.uniform(-0.08, 0.08)
    tone = np.clip(_BASE_TONE + brightness + rng.uniform(-0.03, 0.03, 3), 0.05, 0.95)
    yy, xx = np.mgrid[0:PATCH_SIDE, 0:PATCH_SIDE] / (PATCH_SIDE - 1)
    gx, gy = rng.uniform(-0.06, 0.06, 2)
    ramp = gx * (xx - 0.5) + gy * (yy - 0.5)
    field = tone[None, None, :] + ramp[:, :, None]
    field = field + rng.normal(0.0, _NOISE_SIGMA, (PATCH_SIDE, PATCH_SIDE, 3))
    return field


def _add_lesion(field: Tensor, rng: np.random.Generator) -> Tensor:
    cx = rng.uniform(12.0, PATCH_SIDE - 13.0)
    cy = rng.uniform(12.0, PATCH_SIDE - 13.0)
    rx = rng.uniform(4.0, 15.0)
    ry = rng.uniform(4.0, 15.0)
    contrast = rng.uniform(0.15, 0.45)
    yy, xx = np.mgrid[0:PATCH_SIDE, 0:PATCH_SIDE]
    d2 = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2
    blob = np.exp(-2.0 * d2)  # soft falloff, ~1 at center, ~0.14 at the rim
    drop = contrast * blob
    out = field.copy()
    out[:, :, 0] -= 0.35 * drop  # red survives: lesions read darker and redder
    out[:, :, 1] -= drop
    out[:, :, 2] -= drop
    return out


def _quantize(field: Tensor) -> Tensor:
    return np.rint(np.clip(field, 0.0, 1.0) * 255.0) / 255.0


def synth_patch(rng: np.random.Generator, lesion: bool) -> Tensor:
    """One synthetic patch, already byte-quantized for exact PNG round-trips."""
    field = _skin_field(rng)
    if lesion:
        field = _add_lesion(field, rng)
    return _quantize(field)


def synth_patches(n: int, class_balance: float = 0.5, seed: int = 0) -> PatchDataset:
    """Generate n synthetic patches, a class_balance fraction of them lesions.

    Deterministic per seed, bitwise. Sample order is all healthy patches
    then all lesion patches; ids encode class and position.
    """
    if n < 2:
        raise ConfigError(f"need n >= 2 synthetic patches, got {n}")
    if not 0.0 <= class_balance <= 1.0:
        raise ConfigError(f"class_balance must be in [0, 1], got {class_balance}")
    n_lesion = _round_half_up(n * class_balance)
    n_healthy = n - n_lesion
    rng = np.random.default_rng(seed)
    samples: list[PatchSample] = []
    for i in range(n_healthy):
        samples.append(
            PatchSample(synth_patch(rng, lesion=False), 0, f"healthy/synth_{i:05d}.png")
        )
    for i in range(n_lesion):
        samples.append(
            PatchSample(synth_patch(rng, lesion=True), 1, f"lesion/synth_{i:05d}.png")
        )
    return PatchDataset(samples)


def synth_face(
    seed: int = 0, size: tuple[int, int] = (300, 300), lesions: int = 1
) -> tuple[Tensor, list[tuple[int, int]]]:
    """A face-sized skin field with planted lesion blobs, for scanner tests.

    Returns (pixels in [0,1], list of blob centers as (x, y)). Centers are
    kept >= 30 px from the borders and 60 px apart so each blob fits well
    inside some scan window.
    """
    height, width = size[1], size[0]
    rng = np.random.default_rng(seed)
    tone = np.clip(_BASE_TONE + rng.uniform(-0.05, 0.05, 3), 0.05, 0.95)
    yy, xx = np.mgrid[0:height, 0:width]
    ramp = 0.05 * (xx / max(width - 1, 1) - 0.5) + 0.04 * (yy / max(height - 1, 1) - 0.5)
    field = tone[None, None, :] + ramp[:, :, None]
    field = field + rng.normal(0.0, _NOISE_SIGMA, (height, width, 3))
    centers: list[tuple[int, int]] = []
    guard = 0
    while len(centers) < lesions:
        guard += 1
        if guard > 1000:
            raise ConfigError(f"cannot place {lesions} lesions on a {width}x{height} face")
        cx = int(rng.uniform(30, width - 30))
        cy = int(rng.uniform(30, height - 30))
        if any((cx - px) ** 2 + (cy - py) ** 2 < 60**2 for px, py in centers):
            continue
        rx, ry = rng.uniform(6.0, 14.0, 2)
        contrast = rng.uniform(0.25, 0.45)
        d2 = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2
        drop = contrast * np.exp(-2.0 * d2)
        field[:, :, 0] -= 0.35 * drop
        field[:, :, 1] -= drop
        field[:, :, 2] -= drop
        centers.append((cx, cy))
    return _quantize(field), centers
