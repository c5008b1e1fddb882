"""Connected depressions and the box prompts derived from them.

Components are 8-connected regions of strictly positive depression depth,
numbered 1, 2, ... in raster scan order of their first-encountered pixel.
Shallow or tiny components are discarded before prompting; the survivors
are turned into pixel-aligned bounding boxes that downstream segmenters
consume as prompts.

Box coordinates follow the image convention: ``x`` is the column, ``y`` the
row, origin at the top-left, and the intervals are inclusive-exclusive
(``x0 <= x < x1``, ``y0 <= y < y1``).
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError
from .raster import BinaryMask, Raster


class PromptFormatError(InputError):
    """A prompts JSON document violates the expected schema."""


@dataclass(frozen=True)
class PromptBox:
    """Half-open pixel box: columns [x0, x1), rows [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self) -> None:
        for name in ("x0", "y0", "x1", "y1"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)):
                raise ValueError(f"box coordinate {name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.x0 < 0 or self.y0 < 0:
            raise ValueError(f"box origin must be non-negative, got {self}")
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ValueError(f"box must have positive extent, got {self}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    def as_list(self) -> list[int]:
        return [self.x0, self.y0, self.x1, self.y1]

    def contains(self, row: int, col: int) -> bool:
        return self.y0 <= row < self.y1 and self.x0 <= col < self.x1


@dataclass(frozen=True)
class FilterThresholds:
    """Discard rule for labelled depressions.

    A component survives only if ``max_depth >= min_depth`` and
    ``area_px >= min_area_px`` — i.e. strictly-below either threshold is
    discarded, boundary equality is kept.  Defaults follow the mapping
    campaign this pipeline was built for: minimum depth 2.0 (map units)
    and minimum area 50 pixels.
    """

    min_depth: float = 2.0
    min_area_px: int = 50

    def __post_init__(self) -> None:
        if self.min_depth < 0:
            raise ValueError(f"min_depth must be >= 0, got {self.min_depth}")
        if self.min_area_px < 0:
            raise ValueError(f"min_area_px must be >= 0, got {self.min_area_px}")

    def keeps(self, component: "DepressionComponent") -> bool:
        return (
            component.max_depth >= self.min_depth
            and component.area_px >= self.min_area_px
        )


@dataclass(frozen=True)
class DepressionComponent:
    """One 8-connected region of positive depression depth."""

    id: int
    pixels: frozenset[tuple[int, int]]
    area_px: int
    max_depth: float
    bbox: PromptBox

    def __post_init__(self) -> None:
        if self.area_px != len(self.pixels):
            raise ValueError("area_px must equal len(pixels)")


_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


def _components_from_positive(positive: np.ndarray, depth_values: np.ndarray) -> list[DepressionComponent]:
    h, w = positive.shape
    visited = np.zeros_like(positive)
    components: list[DepressionComponent] = []
    for r0, c0 in np.argwhere(positive):
        if visited[r0, c0]:
            continue
        visited[r0, c0] = True
        queue = deque([(int(r0), int(c0))])
        pixels = []
        while queue:
            r, c = queue.popleft()
            pixels.append((r, c))
            for dr, dc in _OFFSETS:
                nr, nc = r + dr, c + dc
                if 0 <= nr < h and 0 <= nc < w and positive[nr, nc] and not visited[nr, nc]:
                    visited[nr, nc] = True
                    queue.append((nr, nc))
        rows = [p[0] for p in pixels]
        cols = [p[1] for p in pixels]
        components.append(
            DepressionComponent(
                id=len(components) + 1,
                pixels=frozenset(pixels),
                area_px=len(pixels),
                max_depth=float(max(depth_values[r, c] for r, c in pixels)),
                bbox=PromptBox(min(cols), min(rows), max(cols) + 1, max(rows) + 1),
            )
        )
    return components


def label_components(depth: Raster) -> list[DepressionComponent]:
    """Label 8-connected regions of strictly positive depth.

    Nodata and zero-depth cells are background.  Components are numbered
    in scan order (row-major) of their first pixel.

    Raises
    ------
    ValueError
        If any valid cell carries a negative depth.
    """
    valid = depth.valid_mask()
    if bool((depth.values[valid] < 0).any()):
        raise ValueError("depth raster contains negative values")
    positive = valid & (depth.values > 0)
    return _components_from_positive(positive, depth.values)


def components_from_mask(mask: BinaryMask) -> list[DepressionComponent]:
    """Label the set pixels of a binary mask (max_depth reported as 1.0)."""
    return _components_from_positive(mask.values.copy(), mask.values.astype(np.float64))


def filter_components(
    components: list[DepressionComponent], thresholds: FilterThresholds
) -> list[DepressionComponent]:
    """Keep only components at or above both thresholds (order preserved)."""
    return [c for c in components if thresholds.keeps(c)]


def boxes_from_components(
    components: list[DepressionComponent],
    pad_px: int = 0,
    width: int | None = None,
    height: int | None = None,
) -> list[PromptBox]:
    """Tight bounding boxes, grown by ``pad_px`` and clamped to the grid.

    ``width``/``height`` bound the clamp; omit them to clamp only at zero.
    """
    if pad_px < 0:
        raise ValueError(f"pad_px must be >= 0, got {pad_px}")
    boxes = []
    for comp in components:
        b = comp.bbox
        x0 = max(0, b.x0 - pad_px)
        y0 = max(0, b.y0 - pad_px)
        x1 = b.x1 + pad_px
        y1 = b.y1 + pad_px
        if width is not None:
            x1 = min(width, x1)
        if height is not None:
            y1 = min(height, y1)
        boxes.append(PromptBox(x0, y0, x1, y1))
    return boxes


@dataclass(frozen=True)
class PromptSet:
    """The prompts emitted for one patch."""

    patch_id: str
    boxes: list[PromptBox]
    areas: list[int]
    max_depths: list[float]


def prompts_to_json(prompts: PromptSet) -> str:
    doc = {
        "patch_id": prompts.patch_id,
        "boxes": [b.as_list() for b in prompts.boxes],
        "areas": list(prompts.areas),
        "max_depths": list(prompts.max_depths),
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def prompts_from_json(text: str) -> PromptSet:
    """Parse a prompts document; also accepts externally produced box files.

    ``areas``/``max_depths`` may be omitted by external producers, in which
    case they default to empty lists.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PromptFormatError(f"prompts file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "patch_id" not in doc or "boxes" not in doc:
        raise PromptFormatError("prompts document needs 'patch_id' and 'boxes' keys")
    raw_boxes = doc["boxes"]
    if not isinstance(raw_boxes, list):
        raise PromptFormatError("'boxes' must be a list")
    boxes = []
    for i, entry in enumerate(raw_boxes):
        if not (isinstance(entry, list) and len(entry) == 4):
            raise PromptFormatError(f"box {i} must be [x0, y0, x1, y1], got {entry!r}")
        try:
            boxes.append(PromptBox(*entry))
        except ValueError as exc:
            raise PromptFormatError(f"box {i} invalid: {exc}") from exc
    areas = doc.get("areas", [])
    max_depths = doc.get("max_depths", [])
    for name, seq in (("areas", areas), ("max_depths", max_depths)):
        if not isinstance(seq, list):
            raise PromptFormatError(f"'{name}' must be a list")
        if seq and len(seq) != len(boxes):
            raise PromptFormatError(f"'{name}' length must match 'boxes'")
    return PromptSet(
        patch_id=str(doc["patch_id"]),
        boxes=boxes,
        areas=[int(a) for a in areas],
        max_depths=[float(d) for d in max_depths],
    )


def write_prompts(prompts: PromptSet, path: str | Path) -> None:
    Path(path).write_text(prompts_to_json(prompts))


def read_prompts(path: str | Path) -> PromptSet:
    return prompts_from_json(Path(path).read_text())
