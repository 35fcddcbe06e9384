"""Set-of-mark rendering: highlighted mask edges, id tags, and object crops.

All functions are pure over numpy images (H, W, 3) uint8 and produce
bit-identical output for identical input, which the golden-run tests rely
on. Crops keep surrounding background by default because an isolated object
loses relational context; blanking is available behind a flag.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from PIL import Image, ImageDraw, ImageFont
from scipy import ndimage

from .errors import DimensionError
from .masks import BinaryMask, Entity, Rect, bbox, boundary_pixels, centroid, pixels

# 20 high-contrast RGB colors, cycled by entity id.
DEFAULT_PALETTE: tuple[tuple[int, int, int], ...] = (
    (230, 25, 75),
    (60, 180, 75),
    (255, 225, 25),
    (0, 130, 200),
    (245, 130, 48),
    (145, 30, 180),
    (70, 240, 240),
    (240, 50, 230),
    (210, 245, 60),
    (250, 190, 212),
    (0, 128, 128),
    (220, 190, 255),
    (170, 110, 40),
    (255, 250, 200),
    (128, 0, 0),
    (170, 255, 195),
    (128, 128, 0),
    (255, 215, 180),
    (0, 0, 128),
    (128, 128, 128),
)


@dataclass(frozen=True)
class OverlaySpec:
    edge_width: int = 3
    palette: tuple[tuple[int, int, int], ...] = DEFAULT_PALETTE
    label_format: str = "obj_{id}"
    label_anchor: str = "centroid"  # or "bbox_top_left"
    font_size: int | None = None  # default: max(12, min_side // 60)

    def __post_init__(self):
        if self.edge_width < 1:
            raise ValueError("edge_width must be >= 1")
        if not self.palette:
            raise ValueError("palette must not be empty")
        if self.label_anchor not in ("centroid", "bbox_top_left"):
            raise ValueError(f"unknown label_anchor {self.label_anchor!r}")

    def color_for(self, entity_id: int) -> tuple[int, int, int]:
        return self.palette[entity_id % len(self.palette)]

    def resolved_font_size(self, image_size: tuple[int, int]) -> int:
        if self.font_size is not None:
            return self.font_size
        return max(12, min(image_size) // 60)


@dataclass(frozen=True)
class LabelBox:
    entity_id: int
    rect: Rect
    text: str
    # glyph origin compensating for the font's bbox offset, so rendered
    # text stays inside rect
    text_origin: tuple[int, int]


def _load_font(size: int):
    try:
        return ImageFont.load_default(size=size)
    except TypeError:  # older Pillow without scalable default
        return ImageFont.load_default()


def _check_entities(image: np.ndarray, entities: Sequence[Entity]):
    if image.ndim != 3 or image.shape[2] != 3:
        raise DimensionError(f"expected (H, W, 3) image, got {image.shape}")
    h, w = image.shape[:2]
    for e in entities:
        if e.mask.size != (h, w):
            raise DimensionError(f"entity {e.id} mask {e.mask.size} != image {(h, w)}")


def edge_band(mask: BinaryMask, edge_width: int) -> np.ndarray:
    """Contour band: boundary pixels dilated to roughly edge_width."""
    band = boundary_pixels(mask)
    radius = edge_width // 2
    if radius:
        band = ndimage.binary_dilation(band, iterations=radius)
    return band


def layout_labels(
    image_size: tuple[int, int], entities: Sequence[Entity], spec: OverlaySpec
) -> list[LabelBox]:
    """Deterministic label-box placement with downward collision nudging."""
    h, w = image_size
    font_size = spec.resolved_font_size(image_size)
    font = _load_font(font_size)
    measurer = ImageDraw.Draw(Image.new("RGB", (1, 1)))
    pad = 2
    placed: list[LabelBox] = []
    for e in entities:
        text = spec.label_format.format(id=e.id)
        left, top, right, bottom = measurer.textbbox((0, 0), text, font=font)
        tw, th = right - left, bottom - top
        bw, bh = tw + 2 * pad, th + 2 * pad
        if spec.label_anchor == "centroid":
            cx, cy = centroid(e.mask)
            x0 = int(round(cx)) - bw // 2
            y0 = int(round(cy)) - bh // 2
        else:
            box = bbox(e.mask)
            x0, y0 = box.x0, box.y0
        x0 = max(0, min(x0, w - bw)) if w > bw else 0
        y0 = max(0, min(y0, h - bh)) if h > bh else 0
        # nudge down until clear of already-placed labels
        while any(
            _rects_overlap(x0, y0, x0 + bw, y0 + bh, p.rect) for p in placed
        ) and y0 + bh + bh <= h:
            y0 += bh
        rect = Rect(x0, y0, min(x0 + bw, w), min(y0 + bh, h))
        origin = (x0 + pad - left, y0 + pad - top)
        placed.append(LabelBox(entity_id=e.id, rect=rect, text=text, text_origin=origin))
    return placed


def _rects_overlap(x0, y0, x1, y1, r: Rect) -> bool:
    return x0 < r.x1 and r.x0 < x1 and y0 < r.y1 and r.y0 < y1


def render_overlay(
    image: np.ndarray, entities: Sequence[Entity], spec: OverlaySpec | None = None
) -> np.ndarray:
    """Draw contour bands and id tags; untouched pixels stay bit-identical."""
    spec = spec or OverlaySpec()
    _check_entities(image, entities)
    if not entities:
        return image.copy()
    out = image.copy()
    for e in entities:
        band = edge_band(e.mask, spec.edge_width)
        out[band] = spec.color_for(e.id)

    labels = layout_labels(image.shape[:2], entities, spec)
    pil = Image.fromarray(out)
    draw = ImageDraw.Draw(pil)
    font = _load_font(spec.resolved_font_size(image.shape[:2]))
    for box, e in zip(labels, entities):
        r = box.rect
        draw.rectangle([r.x0, r.y0, r.x1 - 1, r.y1 - 1], fill=spec.color_for(e.id))
        draw.text(box.text_origin, box.text, fill=(255, 255, 255), font=font)
    return np.asarray(pil)


def crop_object(
    image: np.ndarray,
    mask: BinaryMask,
    pad_ratio: float = 0.10,
    blank_background: bool = False,
) -> np.ndarray:
    """Crop the mask's bounding box, expanded by pad_ratio per side.

    Background pixels inside the crop are retained unless blank_background
    is set, in which case they are zeroed.
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise DimensionError(f"expected (H, W, 3) image, got {image.shape}")
    h, w = image.shape[:2]
    if mask.size != (h, w):
        raise DimensionError(f"mask {mask.size} != image {(h, w)}")
    box = bbox(mask)  # raises EmptyMaskError on empty masks
    pad_x = int(round(box.width * pad_ratio))
    pad_y = int(round(box.height * pad_ratio))
    x0 = max(0, box.x0 - pad_x)
    y0 = max(0, box.y0 - pad_y)
    x1 = min(w, box.x1 + pad_x)
    y1 = min(h, box.y1 + pad_y)
    crop = image[y0:y1, x0:x1].copy()
    if blank_background:
        crop[~pixels(mask)[y0:y1, x0:x1]] = 0
    return crop


def crop_region(image: np.ndarray, region: Rect) -> np.ndarray:
    """Plain rectangular crop used for stage-3 tiles."""
    return image[region.y0 : region.y1, region.x0 : region.x1].copy()
