"""Sliding-window lesion scanning over a face region of interest.

The deployment pipeline: select a region, slide a 50x50 window over it,
classify every window, and outline the hits in red. Window placement is
a stride grid plus a flush-right column and flush-bottom row whenever the
grid does not reach the region's edge, so every ROI pixel is covered by
at least one window for any stride <= 50.

Images move through this module as 8-bit RGB arrays (H, W, 3), matching
the PNG interchange format; windows are normalized by 1/255 only at the
classifier boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import network as network_mod
from .dataset import PATCH_SIDE
from .errors import ConfigError
from .tensor import Tensor

MARK_COLOR = (255, 0, 0)
MARK_WIDTH = 2


@dataclass(frozen=True)
class Roi:
    """A sub-rectangle of the image: top-left corner plus extent, in pixels."""

    x: int
    y: int
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.x < 0 or self.y < 0:
            raise ConfigError(f"ROI origin must be non-negative, got ({self.x}, {self.y})")
        if self.width < PATCH_SIDE or self.height < PATCH_SIDE:
            raise ConfigError(
                f"ROI must be at least {PATCH_SIDE}x{PATCH_SIDE}, "
                f"got {self.width}x{self.height}"
            )

    def check_inside(self, image_width: int, image_height: int) -> None:
        if self.x + self.width > image_width or self.y + self.height > image_height:
            raise ConfigError(
                f"ROI ({self.x}, {self.y}, {self.width}, {self.height}) exceeds "
                f"the {image_width}x{image_height} image"
            )


@dataclass(frozen=True)
class ScanConfig:
    stride: int = 25
    threshold: float = 0.5
    merge: str = "none"

    def __post_init__(self) -> None:
        if not 1 <= self.stride <= PATCH_SIDE:
            raise ConfigError(f"stride must be in [1, {PATCH_SIDE}], got {self.stride}")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError(f"threshold must be in (0, 1), got {self.threshold}")
        if self.merge not in ("none", "union"):
            raise ConfigError(f"merge must be none or union, got {self.merge!r}")


@dataclass(frozen=True)
class Detection:
    """A window that scored at or above the threshold."""

    x: int
    y: int
    score: float


@dataclass(frozen=True)
class ScanResult:
    detections: tuple[Detection, ...]
    windows_scanned: int
    marked_path: str = ""


def _axis_origins(start: int, extent: int, stride: int) -> list[int]:
    last = start + extent - PATCH_SIDE
    origins = list(range(start, last + 1, stride))
    if origins[-1] != last:
        origins.append(last)  # flush-edge window so the remainder strip is covered
    return origins


def windows(roi: Roi, stride: int) -> list[tuple[int, int]]:
    """Window origins covering the ROI, deduplicated, in row-major order."""
    if not 1 <= stride <= PATCH_SIDE:
        raise ConfigError(f"stride must be in [1, {PATCH_SIDE}], got {stride}")
    xs = _axis_origins(roi.x, roi.width, stride)
    ys = _axis_origins(roi.y, roi.height, stride)
    return [(x, y) for y in ys for x in xs]


def _score_windows(net, patches: Tensor) -> Tensor:
    """Score a (N, 50, 50, 3) stack with a NetworkState or a plain callable."""
    if callable(net):
        scores = np.asarray(net(patches), dtype=np.float64)
        if scores.shape != (patches.shape[0],):
            raise ConfigError(
                f"scoring callable returned shape {scores.shape}, "
                f"expected ({patches.shape[0]},)"
            )
        return scores
    return network_mod.score_patches(net, patches)


def scan(image: Tensor, roi: Roi, net, cfg: ScanConfig) -> tuple[ScanResult, Tensor]:
    """Classify every window in the ROI; returns (result, marked image).

    ``image`` must be an 8-bit RGB array. ``net`` is a NetworkState or any
    callable mapping a (N, 50, 50, 3) float stack in [0,1] to N scores.
    Detections keep row-major window order. The marked image is a copy;
    with zero detections it is bitwise equal to the input.
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise ConfigError(f"image must be (H, W, 3), got {tuple(image.shape)}")
    if image.dtype != np.uint8:
        raise ConfigError(f"image must be 8-bit RGB (uint8), got dtype {image.dtype}")
    roi.check_inside(image.shape[1], image.shape[0])
    origins = windows(roi, cfg.stride)
    stack = np.stack(
        [image[y : y + PATCH_SIDE, x : x + PATCH_SIDE] for x, y in origins]
    ).astype(np.float64) / 255.0
    scores = _score_windows(net, stack)
    detections = tuple(
        Detection(x=x, y=y, score=float(s))
        for (x, y), s in zip(origins, scores)
        if s >= cfg.threshold
    )
    result = ScanResult(detections=detections, windows_scanned=len(origins))
    return result, mark(image, detections, merge=cfg.merge)


def _rects_overlap(a: tuple[int, int, int, int], b: tuple[int, int, int, int]) -> bool:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    return ax < bx + bw and bx < ax + aw and ay < by + bh and by < ay + ah


def _merge_union(rects: list[tuple[int, int, int, int]]) -> list[tuple[int, int, int, int]]:
    """Group transitively overlapping rectangles; each group becomes its bbox."""
    parent = list(range(len(rects)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(rects)):
        for j in range(i + 1, len(rects)):
            if _rects_overlap(rects[i], rects[j]):
                parent[find(i)] = find(j)
    groups: dict[int, list[tuple[int, int, int, int]]] = {}
    for i, r in enumerate(rects):
        groups.setdefault(find(i), []).append(r)
    merged = []
    for members in groups.values():
        x0 = min(r[0] for r in members)
        y0 = min(r[1] for r in members)
        x1 = max(r[0] + r[2] for r in members)
        y1 = max(r[1] + r[3] for r in members)
        merged.append((x0, y0, x1 - x0, y1 - y0))
    merged.sort(key=lambda r: (r[1], r[0]))
    return merged


def mark(image: Tensor, detections, merge: str = "none") -> Tensor:
    """Copy of the image with each detection outlined by an inner red border.

    merge="union" first fuses transitively overlapping detection windows
    and outlines each fused group's bounding box once. Pixels outside the
    2-px borders are untouched; marking is idempotent.
    """
    if merge not in ("none", "union"):
        raise ConfigError(f"merge must be none or union, got {merge!r}")
    out = image.copy()
    rects = [(d.x, d.y, PATCH_SIDE, PATCH_SIDE) for d in detections]
    if merge == "union" and rects:
        rects = _merge_union(rects)
    color = np.array(MARK_COLOR, dtype=image.dtype)
    w = MARK_WIDTH
    for x, y, rw, rh in rects:
        out[y : y + w, x : x + rw] = color
        out[y + rh - w : y + rh, x : x + rw] = color
        out[y : y + rh, x : x + w] = color
        out[y : y + rh, x + rw - w : x + rw] = color
    return out


def export_detections(result: ScanResult, path) -> None:
    """JSON sidecar: windows_scanned plus the detection list."""
    payload = {
        "windows_scanned": result.windows_scanned,
        "detections": [{"x": d.x, "y": d.y, "score": d.score} for d in result.detections],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_detections(path) -> ScanResult:
    with open(path) as fh:
        payload = json.load(fh)
    for key in ("windows_scanned", "detections"):
        if key not in payload:
            raise ConfigError(f"{path}: detection sidecar is missing {key!r}")
    detections = tuple(
        Detection(x=int(d["x"]), y=int(d["y"]), score=float(d["score"]))
        for d in payload["detections"]
    )
    return ScanResult(detections=detections, windows_scanned=int(payload["windows_scanned"]))
