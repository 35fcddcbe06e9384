"""Overlay rendering and crop geometry."""

import numpy as np
import pytest
from scipy import ndimage

from groundcap.errors import DimensionError, EmptyMaskError
from groundcap.masks import rle_encode
from groundcap.overlay import (
    OverlaySpec,
    crop_object,
    edge_band,
    layout_labels,
    render_overlay,
)

from .oracles import ref_boundary
from .test_masks import entity_from_grid, rect_grid


def gradient_image(h, w):
    y = np.arange(h, dtype=np.int64)[:, None]
    x = np.arange(w, dtype=np.int64)[None, :]
    img = np.zeros((h, w, 3), dtype=np.uint8)
    img[..., 0] = y * 3 % 256
    img[..., 1] = x * 5 % 256
    img[..., 2] = (y + x) * 7 % 256
    return img


class TestRenderOverlay:
    def test_zero_entities_identity(self):
        img = gradient_image(40, 50)
        out = render_overlay(img, [])
        assert np.array_equal(out, img)
        assert out is not img

    def test_one_entity_changes_only_band_and_label(self):
        img = gradient_image(64, 64)
        ent = entity_from_grid(3, rect_grid(64, 64, 10, 30, 12, 40))
        spec = OverlaySpec()
        out = render_overlay(img, [ent], spec)
        changed = (out != img).any(axis=2)

        # independent bound: 4-boundary oracle dilated to the band radius
        grid = rect_grid(64, 64, 10, 30, 12, 40)
        band = ref_boundary(grid)
        radius = spec.edge_width // 2
        if radius:
            band = ndimage.binary_dilation(band, iterations=radius)
        label_area = np.zeros((64, 64), dtype=bool)
        for box in layout_labels((64, 64), [ent], spec):
            label_area[box.rect.y0 : box.rect.y1, box.rect.x0 : box.rect.x1] = True
        assert not changed[~(band | label_area)].any()
        # the band (outside any label box) is recolored to the entity color
        assert (out[band & ~label_area] == np.array(spec.color_for(3))).all()

    def test_label_text_uses_format(self):
        spec = OverlaySpec(label_format="obj_{id}")
        ent = entity_from_grid(7, rect_grid(48, 48, 8, 28, 8, 28))
        boxes = layout_labels((48, 48), [ent], spec)
        assert boxes[0].text == "obj_7"

    def test_colliding_labels_nudged_apart(self):
        a = entity_from_grid(1, rect_grid(80, 80, 20, 40, 20, 40))
        b = entity_from_grid(2, rect_grid(80, 80, 22, 42, 22, 42))
        boxes = layout_labels((80, 80), [a, b], OverlaySpec())
        ra, rb = boxes[0].rect, boxes[1].rect
        assert not (ra.x0 < rb.x1 and rb.x0 < ra.x1 and ra.y0 < rb.y1 and rb.y0 < ra.y1)

    def test_deterministic(self):
        img = gradient_image(52, 44)
        ents = [
            entity_from_grid(1, rect_grid(52, 44, 2, 20, 3, 22)),
            entity_from_grid(2, rect_grid(52, 44, 30, 50, 10, 40)),
        ]
        a = render_overlay(img, ents)
        b = render_overlay(img, ents)
        assert np.array_equal(a, b)

    def test_size_mismatch(self):
        img = gradient_image(20, 20)
        ent = entity_from_grid(1, rect_grid(21, 20, 0, 5, 0, 5))
        with pytest.raises(DimensionError):
            render_overlay(img, [ent])


class TestEdgeBand:
    def test_width_one_is_exact_boundary(self):
        g = rect_grid(16, 16, 4, 10, 4, 10)
        assert np.array_equal(edge_band(rle_encode(g), 1), ref_boundary(g))


class TestCropObject:
    def test_full_frame_mask_returns_whole_image(self):
        img = gradient_image(30, 40)
        mask = rle_encode(np.ones((30, 40), dtype=bool))
        assert np.array_equal(crop_object(img, mask), img)

    def test_centered_box_padding_arithmetic(self):
        img = gradient_image(100, 100)
        mask = rle_encode(rect_grid(100, 100, 45, 55, 45, 55))  # 10x10
        crop = crop_object(img, mask, pad_ratio=0.10)
        assert crop.shape == (12, 12, 3)
        assert np.array_equal(crop, img[44:56, 44:56])

    def test_border_mask_clamped(self):
        img = gradient_image(50, 50)
        mask = rle_encode(rect_grid(50, 50, 10, 30, 0, 10))
        crop = crop_object(img, mask, pad_ratio=0.10)
        # x0 clamps to 0; width = 10 + 1 (right pad only)
        assert crop.shape == (24, 11, 3)

    def test_background_retained_by_default(self):
        img = gradient_image(40, 40)
        g = np.zeros((40, 40), dtype=bool)
        g[10:20, 10:20] = True
        g[10, 10] = False  # carve a background pixel inside the bbox
        crop = crop_object(img, rle_encode(g), pad_ratio=0.0)
        assert np.array_equal(crop, img[10:20, 10:20])

    def test_blank_background_zeroes_outside_mask(self):
        img = gradient_image(40, 40) + 1  # keep zeros meaningful
        g = np.zeros((40, 40), dtype=bool)
        g[10:20, 10:20] = True
        g[10, 10] = False
        crop = crop_object(img, rle_encode(g), pad_ratio=0.0, blank_background=True)
        assert (crop[0, 0] == 0).all()
        assert (crop[1:, 1:] != 0).any()

    def test_empty_mask(self):
        img = gradient_image(10, 10)
        with pytest.raises(EmptyMaskError):
            crop_object(img, rle_encode(np.zeros((10, 10))))
