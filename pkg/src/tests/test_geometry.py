import unittest

import numpy as np

from src.domain.entities import Box, LtrbTargets
from src.domain.geometry import centerness_target, iou, iou_matrix, ltrb_decode, ltrb_encode, nms


def brute_iou(a, b):
    # interseção por aritmética explícita de áreas
    ix0, iy0 = max(a[0], b[0]), max(a[1], b[1])
    ix1, iy1 = min(a[2], b[2]), min(a[3], b[3])
    inter = max(0.0, ix1 - ix0) * max(0.0, iy1 - iy0)
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


def brute_nms(boxes, scores, thr):
    order = sorted(range(len(boxes)), key=lambda i: (-scores[i], i))
    keep = []
    for i in order:
        if all(brute_iou(boxes[i], boxes[k]) <= thr for k in keep):
            keep.append(i)
    return keep


def random_boxes(rng, n, size=32.0):
    corners = rng.uniform(0, size, size=(n, 2, 2))
    lo, hi = corners.min(axis=1), corners.max(axis=1)
    return [Box(float(lo[i, 0]), float(lo[i, 1]), float(hi[i, 0]), float(hi[i, 1])) for i in range(n)]


class TestIou(unittest.TestCase):
    def test_identical_boxes_have_iou_one(self):
        box = Box(1, 2, 5, 9)
        self.assertAlmostEqual(iou(box, box), 1.0)

    def test_disjoint_and_touching_boxes_have_iou_zero(self):
        self.assertEqual(iou(Box(0, 0, 2, 2), Box(3, 3, 5, 5)), 0.0)
        self.assertEqual(iou(Box(0, 0, 2, 2), Box(2, 0, 4, 2)), 0.0)

    def test_zero_area_boxes(self):
        self.assertEqual(iou(Box(1, 1, 1, 1), Box(1, 1, 1, 1)), 0.0)

    def test_half_overlap(self):
        self.assertAlmostEqual(iou(Box(0, 0, 2, 2), Box(1, 0, 3, 2)), 1.0 / 3.0)

    def test_matches_brute_force_and_is_symmetric(self):
        rng = np.random.default_rng(0)
        boxes = random_boxes(rng, 40)
        matrix = iou_matrix(np.array([b.to_list() for b in boxes]), np.array([b.to_list() for b in boxes]))
        for i, a in enumerate(boxes):
            for j, b in enumerate(boxes):
                expected = brute_iou(a.to_list(), b.to_list())
                self.assertAlmostEqual(iou(a, b), expected, places=12)
                self.assertAlmostEqual(matrix[i, j], expected, places=12)
                self.assertAlmostEqual(iou(a, b), iou(b, a), places=12)
                self.assertTrue(0.0 <= iou(a, b) <= 1.0)

    def test_inverted_box_is_rejected(self):
        with self.assertRaises(ValueError):
            Box(3, 0, 1, 2)


class TestLtrb(unittest.TestCase):
    def test_decode_inverts_encode(self):
        box = Box(2.0, 3.0, 10.0, 7.5)
        location = (4.0, 5.0)
        decoded = ltrb_decode(location, ltrb_encode(location, box))
        np.testing.assert_allclose(decoded.to_list(), box.to_list())

    def test_centerness_is_one_at_center(self):
        box = Box(0, 0, 8, 4)
        self.assertAlmostEqual(centerness_target(ltrb_encode(box.center, box)), 1.0)

    def test_centerness_is_zero_on_border(self):
        box = Box(0, 0, 8, 4)
        self.assertEqual(centerness_target(ltrb_encode((0.0, 2.0), box)), 0.0)

    def test_centerness_known_value(self):
        value = centerness_target(LtrbTargets(l=1, t=2, r=3, b=2))
        self.assertAlmostEqual(value, np.sqrt(1.0 / 3.0))


class TestNms(unittest.TestCase):
    def test_empty_input(self):
        self.assertEqual(nms([], [], 0.5), [])

    def test_invalid_threshold(self):
        with self.assertRaises(ValueError):
            nms([Box(0, 0, 1, 1)], [1.0], 1.5)

    def test_length_mismatch(self):
        with self.assertRaises(ValueError):
            nms([Box(0, 0, 1, 1)], [1.0, 0.5], 0.5)

    def test_threshold_one_keeps_everything(self):
        boxes = [Box(0, 0, 4, 4)] * 3
        self.assertEqual(sorted(nms(boxes, [0.3, 0.9, 0.5], 1.0)), [0, 1, 2])

    def test_duplicates_collapse_to_highest_score(self):
        boxes = [Box(0, 0, 4, 4), Box(0, 0, 4, 4), Box(10, 10, 12, 12)]
        self.assertEqual(nms(boxes, [0.2, 0.8, 0.5], 0.5), [1, 2])

    def test_matches_brute_force(self):
        rng = np.random.default_rng(7)
        for trial in range(20):
            boxes = random_boxes(rng, 15)
            scores = list(rng.uniform(size=15))
            for thr in (0.0, 0.3, 0.5, 0.7):
                expected = brute_nms([b.to_list() for b in boxes], scores, thr)
                self.assertEqual(nms(boxes, scores, thr), expected)

    def test_kept_boxes_do_not_overlap_above_threshold(self):
        rng = np.random.default_rng(3)
        boxes = random_boxes(rng, 30)
        scores = list(rng.uniform(size=30))
        keep = nms(boxes, scores, 0.4)
        for i in keep:
            for j in keep:
                if i != j:
                    self.assertLessEqual(iou(boxes[i], boxes[j]), 0.4)


if __name__ == '__main__':
    unittest.main()
