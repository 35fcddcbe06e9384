"""Pure geometry kernel for binary masks.

Masks are stored as uncompressed run-length encodings over a column-major
pixel scan, with the first run counting background (zero) pixels. All set
operations decode to boolean grids internally; decoded grids are cached per
mask object, so repeated pairwise queries (IoU matrices, NMS) stay cheap.

Everything here is a pure function over immutable inputs and safe to call
from concurrent workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .errors import DimensionError, EmptyMaskError, RleCorruptionError

ENTITY_SOURCES = ("panoptic", "proposal", "refined")

# 8-connectivity structuring element for component labelling.
_EIGHT = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class BinaryMask:
    """Uncompressed RLE mask: column-major scan, leading run is background."""

    height: int
    width: int
    counts: tuple[int, ...]

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise DimensionError(f"mask grid must be non-empty, got {self.height}x{self.width}")
        if not self.counts:
            raise RleCorruptionError("counts must not be empty")
        if any(c < 0 for c in self.counts):
            raise RleCorruptionError("counts must be non-negative")
        if any(c == 0 for c in self.counts[1:]):
            raise RleCorruptionError("only the leading count may be zero")
        total = sum(self.counts)
        if total != self.height * self.width:
            raise RleCorruptionError(
                f"counts sum {total} != {self.height}x{self.width} grid"
            )

    @property
    def size(self) -> tuple[int, int]:
        return (self.height, self.width)


@dataclass(frozen=True)
class Rect:
    """Half-open pixel rectangle: [x0, x1) x [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x0 >= self.x1 or self.y0 >= self.y1:
            raise DimensionError(f"degenerate rect {self}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    def contains_point(self, x: float, y: float) -> bool:
        return self.x0 <= x < self.x1 and self.y0 <= y < self.y1


@dataclass(frozen=True)
class PointPrompt:
    x: int
    y: int
    polarity: str = "positive"

    def __post_init__(self):
        if self.polarity not in ("positive", "negative"):
            raise ValueError(f"bad polarity {self.polarity!r}")


@dataclass(frozen=True)
class Entity:
    """One masked object: per-image unique id, mask, tag, confidence, origin."""

    id: int
    mask: BinaryMask
    label: str
    score: float
    source: str

    def __post_init__(self):
        if self.id < 1:
            raise ValueError(f"entity id must be positive, got {self.id}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        if self.source not in ENTITY_SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        if area(self.mask) == 0:
            raise EmptyMaskError(f"entity {self.id} has an empty mask")


@dataclass(frozen=True)
class EntitySet:
    """Per-image entity collection with a disjointness lifecycle.

    A finalized set guarantees pairwise-disjoint masks; downstream stages
    require finalized input.
    """

    image_id: str
    image_size: tuple[int, int]
    entities: tuple[Entity, ...]
    finalized: bool = False

    def __post_init__(self):
        ids = [e.id for e in self.entities]
        if len(ids) != len(set(ids)):
            raise ValueError(f"duplicate entity ids in image {self.image_id}")
        for e in self.entities:
            if e.mask.size != self.image_size:
                raise DimensionError(
                    f"entity {e.id} mask {e.mask.size} != image {self.image_size}"
                )
        if self.finalized:
            _check_pairwise_disjoint(self.entities, self.image_id)

    def ids(self) -> tuple[int, ...]:
        return tuple(e.id for e in self.entities)

    def finalize(self) -> "EntitySet":
        return replace(self, finalized=True)


def _check_pairwise_disjoint(entities: Sequence[Entity], image_id: str):
    claimed = None
    for e in entities:
        pix = pixels(e.mask)
        if claimed is None:
            claimed = pix.copy()
            continue
        if np.logical_and(claimed, pix).any():
            raise ValueError(f"finalized set for {image_id} has overlapping masks")
        claimed |= pix


def rle_encode(grid) -> BinaryMask:
    """Encode a 2D binary array as a column-major uncompressed RLE mask."""
    arr = np.asarray(grid)
    if arr.ndim != 2 or arr.size == 0:
        raise DimensionError(f"expected non-empty 2D grid, got shape {arr.shape}")
    flat = arr.astype(bool).ravel(order="F")
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts = [0] + counts
    h, w = arr.shape
    return BinaryMask(height=h, width=w, counts=tuple(int(c) for c in counts))


def rle_decode(mask: BinaryMask) -> np.ndarray:
    """Exact inverse of rle_encode; returns a fresh (H, W) uint8 grid."""
    return pixels(mask).astype(np.uint8)


def pixels(mask: BinaryMask) -> np.ndarray:
    """Read-only boolean grid for a mask; cached on the mask object."""
    cached = getattr(mask, "_pixel_cache", None)
    if cached is None:
        values = np.zeros(len(mask.counts), dtype=bool)
        values[1::2] = True
        flat = np.repeat(values, np.asarray(mask.counts, dtype=np.int64))
        cached = flat.reshape((mask.height, mask.width), order="F")
        cached.setflags(write=False)
        object.__setattr__(mask, "_pixel_cache", cached)
    return cached


def rle_to_text(mask: BinaryMask) -> str:
    """Record text form: height, width, then counts, space-separated."""
    return " ".join([str(mask.height), str(mask.width)] + [str(c) for c in mask.counts])


def rle_from_text(text: str) -> BinaryMask:
    parts = text.split()
    if len(parts) < 3:
        raise RleCorruptionError(f"RLE text too short: {text!r}")
    try:
        numbers = [int(p) for p in parts]
    except ValueError as exc:
        raise RleCorruptionError(f"non-integer token in RLE text: {text!r}") from exc
    return BinaryMask(height=numbers[0], width=numbers[1], counts=tuple(numbers[2:]))


def area(mask: BinaryMask) -> int:
    return int(sum(mask.counts[1::2]))


def _require_same_size(a: BinaryMask, b: BinaryMask):
    if a.size != b.size:
        raise DimensionError(f"mask sizes differ: {a.size} vs {b.size}")


def intersection_area(a: BinaryMask, b: BinaryMask) -> int:
    _require_same_size(a, b)
    return int(np.logical_and(pixels(a), pixels(b)).sum())


def iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union; 0.0 when both masks are empty."""
    inter = intersection_area(a, b)
    union = area(a) + area(b) - inter
    if union == 0:
        return 0.0
    return inter / union


def containment_fraction(a: BinaryMask, b: BinaryMask) -> float:
    """Fraction of a's pixels that lie inside b; 0.0 for an empty a."""
    inter = intersection_area(a, b)
    denom = area(a)
    if denom == 0:
        return 0.0
    return inter / denom


def bbox(mask: BinaryMask) -> Rect:
    """Tightest rectangle containing all set pixels."""
    pix = pixels(mask)
    rows = np.flatnonzero(pix.any(axis=1))
    cols = np.flatnonzero(pix.any(axis=0))
    if rows.size == 0:
        raise EmptyMaskError("bbox of an empty mask")
    return Rect(x0=int(cols[0]), y0=int(rows[0]), x1=int(cols[-1]) + 1, y1=int(rows[-1]) + 1)


def merge_contained(
    entities: Sequence[Entity],
    cf_thresh: float = 0.95,
    iou_thresh: float = 0.5,
) -> list[Entity]:
    """Drop masks that sit (almost) completely inside a bigger mask.

    An entity E is dropped when some other entity F satisfies
    containment_fraction(E, F) >= cf_thresh and iou(E, F) > iou_thresh and F
    outranks E (larger area, ties broken by lower id). The condition is
    evaluated against the original input, so the result is order-independent
    and idempotent. Survivors keep their input order.
    """
    items = list(entities)
    if len(items) <= 1:
        return items
    areas = [area(e.mask) for e in items]
    drop = [False] * len(items)
    for i, e in enumerate(items):
        for j, f in enumerate(items):
            if i == j:
                continue
            outranked = areas[j] > areas[i] or (areas[j] == areas[i] and f.id < e.id)
            if not outranked:
                continue
            if (
                containment_fraction(e.mask, f.mask) >= cf_thresh
                and iou(e.mask, f.mask) > iou_thresh
            ):
                drop[i] = True
                break
    return [e for i, e in enumerate(items) if not drop[i]]


def area_nms(entities: Sequence[Entity], iou_thresh: float = 0.5) -> list[Entity]:
    """Greedy suppression that ranks by mask area instead of confidence.

    Candidates are visited largest-area first (ties by lower id) and dropped
    iff their IoU with any already-kept entity exceeds iou_thresh. Output is
    in descending-area order.
    """
    order = sorted(entities, key=lambda e: (-area(e.mask), e.id))
    kept: list[Entity] = []
    for cand in order:
        if all(iou(cand.mask, k.mask) <= iou_thresh for k in kept):
            kept.append(cand)
    return kept


def enforce_disjoint(entities: Sequence[Entity]) -> list[Entity]:
    """Resolve overlaps by giving contested pixels to the largest claimant.

    Priority is original area descending, ties by lower id. Entities whose
    mask ends up empty are removed; survivors keep their input order.
    """
    items = list(entities)
    if not items:
        return []
    size = items[0].mask.size
    assigned = np.zeros(size, dtype=bool)
    new_masks: dict[int, BinaryMask | None] = {}
    for e in sorted(items, key=lambda e: (-area(e.mask), e.id)):
        claim = np.logical_and(pixels(e.mask), ~assigned)
        if claim.any():
            assigned |= claim
            new_masks[e.id] = rle_encode(claim)
        else:
            new_masks[e.id] = None
    out = []
    for e in items:
        mask = new_masks[e.id]
        if mask is not None:
            out.append(replace(e, mask=mask))
    return out


def centroid(mask: BinaryMask) -> tuple[float, float]:
    """Mean (x, y) of set pixel coordinates."""
    ys, xs = np.nonzero(pixels(mask))
    if ys.size == 0:
        raise EmptyMaskError("centroid of an empty mask")
    return (float(xs.mean()), float(ys.mean()))


def sample_point_prompts(mask: BinaryMask, k: int = 5) -> list[PointPrompt]:
    """Deterministic positive point prompts spread over the mask.

    The first point is the centroid pixel if set, else the set pixel nearest
    the centroid; the rest come from greedy farthest-point sampling. Never
    emits duplicates, so small masks can return fewer than k points.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    pix = pixels(mask)
    ys, xs = np.nonzero(pix)
    if ys.size == 0:
        raise EmptyMaskError("cannot sample points from an empty mask")
    cx, cy = centroid(mask)
    px, py = int(math.floor(cx + 0.5)), int(math.floor(cy + 0.5))
    if 0 <= py < mask.height and 0 <= px < mask.width and pix[py, px]:
        first = (px, py)
    else:
        d2 = (xs - cx) ** 2 + (ys - cy) ** 2
        best = np.lexsort((ys, xs, d2))[0]
        first = (int(xs[best]), int(ys[best]))

    chosen = [first]
    # min squared distance from every set pixel to the chosen set
    mind2 = (xs - first[0]) ** 2 + (ys - first[1]) ** 2
    while len(chosen) < k:
        far = np.lexsort((ys, xs, -mind2))[0]
        if mind2[far] == 0:
            break  # every set pixel coincides with a chosen point
        nxt = (int(xs[far]), int(ys[far]))
        chosen.append(nxt)
        d2 = (xs - nxt[0]) ** 2 + (ys - nxt[1]) ** 2
        mind2 = np.minimum(mind2, d2)
    return [PointPrompt(x=x, y=y, polarity="positive") for x, y in chosen]


def boundary_pixels(mask: BinaryMask) -> np.ndarray:
    """Set pixels having at least one 4-neighbor outside the mask.

    The image border counts as outside.
    """
    pix = pixels(mask)
    padded = np.pad(pix, 1, constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return np.logical_and(pix, ~interior)


def contours(mask: BinaryMask) -> list[list[tuple[int, int]]]:
    """Closed boundary walks, one or more per 8-connected component.

    Each polygon is a closed sequence of (x, y) boundary-pixel coordinates
    with 8-adjacent consecutive vertices; rasterizing all polygons marks
    exactly the pixels reported by boundary_pixels().
    """
    if area(mask) == 0:
        raise EmptyMaskError("contours of an empty mask")
    pix = pixels(mask)
    boundary = boundary_pixels(mask)
    labels, n = ndimage.label(pix, structure=_EIGHT)
    polygons: list[list[tuple[int, int]]] = []
    for comp in range(1, n + 1):
        comp_boundary = np.logical_and(boundary, labels == comp)
        polygons.extend(_closed_walks(comp_boundary))
    return polygons


# neighbor visit order for boundary walks (clockwise from east)
_WALK_STEPS = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))


def _closed_walks(boundary: np.ndarray) -> list[list[tuple[int, int]]]:
    """Split a boundary-pixel set into closed 8-connected walks.

    Each walk is a depth-first traversal that records backtracking steps, so
    consecutive vertices are always adjacent and the walk returns to its
    starting pixel while covering every pixel of its 8-connected piece.
    """
    labels, n = ndimage.label(boundary, structure=_EIGHT)
    walks = []
    for piece in range(1, n + 1):
        ys, xs = np.nonzero(labels == piece)
        piece_set = set(zip(xs.tolist(), ys.tolist()))
        start = min(piece_set, key=lambda p: (p[1], p[0]))
        visited = {start}
        walk = [start]
        stack = [start]
        while stack:
            x, y = stack[-1]
            advanced = False
            for dx, dy in _WALK_STEPS:
                nxt = (x + dx, y + dy)
                if nxt in piece_set and nxt not in visited:
                    visited.add(nxt)
                    walk.append(nxt)
                    stack.append(nxt)
                    advanced = True
                    break
            if not advanced:
                stack.pop()
                if stack:
                    walk.append(stack[-1])  # backtrack step keeps adjacency
        walks.append(walk)
    return walks


def union_area(entities: Iterable[Entity]) -> int:
    """Total number of pixels covered by any entity mask."""
    total = None
    for e in entities:
        pix = pixels(e.mask)
        total = pix.copy() if total is None else np.logical_or(total, pix)
    return 0 if total is None else int(total.sum())
