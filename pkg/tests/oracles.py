"""Brute-force reference implementations used as test oracles.

Everything here works on raw numpy grids and plain Python, independent of
the mask kernel's RLE representation and set-operation code paths.
"""

import numpy as np


def grid_area(grid) -> int:
    return int(np.asarray(grid, dtype=bool).sum())


def grid_inter(a, b) -> int:
    return int(np.logical_and(np.asarray(a, dtype=bool), np.asarray(b, dtype=bool)).sum())


def grid_iou(a, b) -> float:
    inter = grid_inter(a, b)
    union = grid_area(a) + grid_area(b) - inter
    return inter / union if union else 0.0


def grid_cf(a, b) -> float:
    denom = grid_area(a)
    return grid_inter(a, b) / denom if denom else 0.0


def ref_merge_contained(items, cf_thresh=0.95, iou_thresh=0.5):
    """One-shot pairwise containment drop over (id, grid) pairs.

    E is dropped when some F with larger area (ties by lower id) satisfies
    cf(E, F) >= cf_thresh and iou(E, F) > iou_thresh, judged on the input.
    Returns surviving ids in input order.
    """
    survivors = []
    for eid, egrid in items:
        ea = grid_area(egrid)
        dropped = False
        for fid, fgrid in items:
            if fid == eid:
                continue
            fa = grid_area(fgrid)
            if not (fa > ea or (fa == ea and fid < eid)):
                continue
            if grid_cf(egrid, fgrid) >= cf_thresh and grid_iou(egrid, fgrid) > iou_thresh:
                dropped = True
                break
        if not dropped:
            survivors.append(eid)
    return survivors


def ref_area_nms(items, iou_thresh=0.5):
    """Greedy area-priority suppression over (id, grid) pairs.

    Returns kept ids in descending-area order (ties by lower id).
    """
    order = sorted(items, key=lambda it: (-grid_area(it[1]), it[0]))
    kept = []
    for eid, egrid in order:
        if all(grid_iou(egrid, kgrid) <= iou_thresh for _, kgrid in kept):
            kept.append((eid, egrid))
    return [eid for eid, _ in kept]


def ref_disjoint_assignment(items):
    """Pixel-assignment oracle: contested pixels go to the largest claimant.

    Returns {id: grid} of the reassigned masks (empty ones omitted).
    """
    order = sorted(items, key=lambda it: (-grid_area(it[1]), it[0]))
    taken = None
    out = {}
    for eid, egrid in order:
        egrid = np.asarray(egrid, dtype=bool)
        if taken is None:
            taken = np.zeros_like(egrid)
        claim = np.logical_and(egrid, ~taken)
        taken |= claim
        if claim.any():
            out[eid] = claim
    return out


def ref_bbox(grid):
    """(x0, y0, x1, y1) via a plain coordinate scan."""
    ys, xs = np.nonzero(np.asarray(grid, dtype=bool))
    return (int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)


def ref_boundary(grid):
    """Set pixels with a 4-neighbor outside the mask (border is outside)."""
    g = np.asarray(grid, dtype=bool)
    h, w = g.shape
    out = np.zeros_like(g)
    for y in range(h):
        for x in range(w):
            if not g[y, x]:
                continue
            for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                ny, nx = y + dy, x + dx
                if not (0 <= ny < h and 0 <= nx < w) or not g[ny, nx]:
                    out[y, x] = True
                    break
    return out


def random_blob_grid(rng, h, w):
    """Non-empty random mask: a noisy rectangle patch on an empty grid."""
    grid = np.zeros((h, w), dtype=bool)
    y0 = int(rng.integers(0, h))
    x0 = int(rng.integers(0, w))
    bh = int(rng.integers(1, h - y0 + 1))
    bw = int(rng.integers(1, w - x0 + 1))
    patch = rng.random((bh, bw)) < rng.uniform(0.35, 1.0)
    grid[y0 : y0 + bh, x0 : x0 + bw] = patch
    if not grid.any():
        grid[y0, x0] = True
    return grid
