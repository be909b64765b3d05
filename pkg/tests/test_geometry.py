from __future__ import annotations

import random

import numpy as np
import pytest

from docqa.core import (
    BBox,
    DocumentImage,
    Prediction,
    QARecord,
    Quad,
    crop,
    envelope,
    quad_to_bbox,
)
from docqa.errors import UsageError, ValidationError


def rand_box(rng: random.Random, size: int = 100) -> BBox:
    x1 = rng.randint(0, size - 1)
    y1 = rng.randint(0, size - 1)
    return BBox(x1, y1, rng.randint(x1 + 1, size), rng.randint(y1 + 1, size))


class TestBBox:
    def test_invariants(self):
        b = BBox(1, 2, 5, 9)
        assert (b.width, b.height, b.area) == (4, 7, 28)

    def test_rejects_inverted(self):
        with pytest.raises(ValidationError):
            BBox(5, 0, 1, 10)

    def test_rejects_negative(self):
        with pytest.raises(ValidationError):
            BBox(-1, 0, 1, 1)

    def test_round_outward(self):
        assert BBox.round_outward(1.2, 3.7, 4.1, 5.0) == BBox(1, 3, 5, 5)

    def test_clip_and_within(self):
        b = BBox(5, 5, 50, 50)
        assert b.within(50, 50)
        assert not b.within(49, 50)
        assert b.clip(40, 60) == BBox(5, 5, 40, 50)


class TestEnvelope:
    def test_single_box_identity(self):
        assert envelope([BBox(0, 0, 10, 10)]) == BBox(0, 0, 10, 10)

    def test_two_boxes(self):
        assert envelope([BBox(0, 0, 10, 10), BBox(20, 5, 30, 15)]) == BBox(0, 0, 30, 15)

    def test_empty_is_usage_error(self):
        with pytest.raises(UsageError):
            envelope([])

    def test_matches_coordinate_scan_oracle(self):
        rng = random.Random(101)
        boxes = [rand_box(rng) for _ in range(50)]
        got = envelope(boxes)
        assert got == BBox(
            min(b.x1 for b in boxes),
            min(b.y1 for b in boxes),
            max(b.x2 for b in boxes),
            max(b.y2 for b in boxes),
        )

    def test_idempotent_and_order_invariant(self):
        rng = random.Random(55)
        for _ in range(25):
            boxes = [rand_box(rng) for _ in range(rng.randint(1, 8))]
            e = envelope(boxes)
            assert envelope([e]) == e
            shuffled = boxes[:]
            rng.shuffle(shuffled)
            assert envelope(shuffled) == e


class TestQuad:
    def test_axis_aligned_quad_is_its_own_bbox(self):
        q = Quad(((0, 0), (10, 0), (10, 5), (0, 5)))
        assert quad_to_bbox(q) == BBox(0, 0, 10, 5)

    def test_rotated_square(self):
        q = Quad(((5, 0), (10, 5), (5, 10), (0, 5)))
        assert quad_to_bbox(q) == BBox(0, 0, 10, 10)

    def test_degenerate_rejected(self):
        with pytest.raises(ValidationError):
            Quad(((0, 0), (5, 5), (10, 10), (2, 2)))

    def test_self_intersecting_rejected(self):
        with pytest.raises(ValidationError):
            Quad(((0, 0), (10, 10), (10, 0), (0, 10)))

    def test_random_quads_match_corner_scan(self):
        rng = random.Random(77)
        checked = 0
        while checked < 100:
            pts = [(rng.randint(0, 50), rng.randint(0, 50)) for _ in range(4)]
            try:
                q = Quad(tuple(pts))
            except ValidationError:
                continue
            xs = [p[0] for p in pts]
            ys = [p[1] for p in pts]
            assert quad_to_bbox(q) == BBox(min(xs), min(ys), max(xs), max(ys))
            checked += 1


class TestDocumentImage:
    def test_shape_validation(self):
        with pytest.raises(ValidationError):
            DocumentImage("x", np.zeros((4, 4), dtype=np.uint8))

    def test_pixels_frozen(self):
        img = DocumentImage.blank("x", 4, 4)
        with pytest.raises(ValueError):
            img.pixels[0, 0] = 0

    def test_png_roundtrip(self):
        rng = np.random.default_rng(3)
        img = DocumentImage("x", rng.integers(0, 256, (9, 7, 3), dtype=np.uint8))
        again = DocumentImage.from_png_bytes(img.to_png_bytes(), "x")
        assert np.array_equal(img.pixels, again.pixels)


class TestCrop:
    def make_image(self, seed=0, w=16, h=12):
        rng = np.random.default_rng(seed)
        return DocumentImage("img", rng.integers(0, 256, (h, w, 3), dtype=np.uint8))

    def test_identity_crop(self):
        img = self.make_image()
        out = crop(img, BBox(0, 0, img.width, img.height))
        assert np.array_equal(out, img.pixels)

    def test_single_pixel(self):
        img = self.make_image()
        out = crop(img, BBox(0, 0, 1, 1))
        assert out.shape == (1, 1, 3)
        assert np.array_equal(out[0, 0], img.pixels[0, 0])

    def test_checkerboard_matches_per_pixel_oracle(self):
        board = np.zeros((8, 8, 3), dtype=np.uint8)
        for y in range(8):
            for x in range(8):
                board[y, x] = 255 if (x + y) % 2 == 0 else 0
        img = DocumentImage("board", board)
        out = crop(img, BBox(2, 2, 6, 6))
        assert out.shape == (4, 4, 3)
        for y in range(4):
            for x in range(4):
                expected = 255 if ((x + 2) + (y + 2)) % 2 == 0 else 0
                assert out[y, x, 0] == expected

    def test_out_of_bounds_never_clamps(self):
        img = self.make_image()
        with pytest.raises(ValidationError):
            crop(img, BBox(0, 0, img.width + 1, img.height))

    def test_crop_paste_roundtrip(self):
        img = self.make_image(seed=9, w=20, h=20)
        rng = random.Random(4)
        for _ in range(20):
            b = rand_box(rng, size=20)
            piece = crop(img, b)
            canvas = img.pixels.copy()
            canvas[b.y1 : b.y2, b.x1 : b.x2] = piece
            assert np.array_equal(canvas, img.pixels)


class TestDomainTypes:
    def test_qarecord_requires_gold_answers(self):
        with pytest.raises(ValidationError):
            QARecord("d", "q", "?", gold_answers=())

    def test_prediction_ids_require_box(self):
        with pytest.raises(ValidationError):
            Prediction("q", "a", matched_region_ids=(1,))
