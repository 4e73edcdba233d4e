import unittest

import numpy as np

from src.domain.diffcore import sigmoid
from src.domain.entities import Box, FeatureMap, LocationPredictions, ObjectInstance, ParamTensor, PgtBox, Proposal, Scene
from src.domain.geometry import iou
from src.domain.proposals import (
    _col2im3x3,
    _im2col3x3,
    assign_pg_targets,
    cell_centers,
    decode_proposals,
    loss_pg,
    lowsrpn_backward,
    lowsrpn_forward,
    merge_proposals,
    oracle_box_refine,
    oracle_grid_proposals,
)


def numeric_grad(fn, x, eps=1e-6):
    grad = np.zeros_like(x)
    flat, out = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + eps
        plus = fn()
        flat[i] = original - eps
        minus = fn()
        flat[i] = original
        out[i] = (plus - minus) / (2 * eps)
    return grad


def rpn_params(rng, channels, width):
    shapes = {
        "rpn.conv.W": (9 * channels, width), "rpn.conv.b": (width,),
        "rpn.p.W": (width, 1), "rpn.p.b": (1,),
        "rpn.c.W": (width, 1), "rpn.c.b": (1,),
        "rpn.t.W": (width, 4), "rpn.t.b": (4,),
    }
    params = {name: ParamTensor(name, rng.normal(scale=0.3, size=shape)) for name, shape in shapes.items()}
    params["rpn.t.b"].values[...] = np.log(4.0)
    return params


def predictions(p, c, t, stride=4):
    rows, cols = p.shape
    return LocationPredictions(p=p, c=c, t=t, stride=stride, image_size=(rows * stride, cols * stride))


def scene_with(objects, size=32, seed=5):
    return Scene(height=size, width=size, objects=objects, dataset_id=0, brightness=0.3, clutter_density=0.0, seed=seed)


class TestLowsrpn(unittest.TestCase):
    def test_cell_centers_row_major(self):
        centers = cell_centers((2, 3), 4)
        np.testing.assert_array_equal(centers[:4], [[2, 2], [6, 2], [10, 2], [2, 6]])

    def test_im2col_adjoint(self):
        rng = np.random.default_rng(0)
        values = rng.normal(size=(3, 4, 2))
        upstream = rng.normal(size=(12, 18))
        lhs = float((_im2col3x3(values) * upstream).sum())
        rhs = float((values * _col2im3x3(upstream, values.shape)).sum())
        self.assertAlmostEqual(lhs, rhs, places=10)

    def test_forward_ranges(self):
        rng = np.random.default_rng(1)
        fmap = FeatureMap(values=rng.uniform(size=(3, 3, 2)), stride=4)
        preds, _ = lowsrpn_forward(fmap, rpn_params(rng, 2, 4))
        self.assertEqual(preds.t.shape, (3, 3, 4))
        self.assertTrue(np.all((preds.p > 0) & (preds.p < 1)))
        self.assertTrue(np.all(preds.t > 0))
        self.assertEqual(preds.image_size, (12, 12))

    def test_backward_matches_numeric(self):
        rng = np.random.default_rng(2)
        fmap = FeatureMap(values=rng.uniform(size=(3, 3, 2)), stride=4)
        params = rpn_params(rng, 2, 4)
        a, b, w = rng.normal(size=(3, 3)), rng.normal(size=(3, 3)), rng.normal(size=(3, 3, 4))

        def loss():
            preds, _ = lowsrpn_forward(fmap, params)
            return float((preds.p * a).sum() + (preds.c * b).sum() + (preds.t * w).sum())

        preds, cache = lowsrpn_forward(fmap, params)
        grads = {}
        d_fmap = lowsrpn_backward(
            (a * preds.p * (1 - preds.p)).reshape(-1),
            (b * preds.c * (1 - preds.c)).reshape(-1),
            w.reshape(-1, 4),
            preds,
            cache,
            grads,
        )
        np.testing.assert_allclose(d_fmap, numeric_grad(loss, fmap.values), rtol=1e-5, atol=1e-7)
        for name in ("rpn.conv.W", "rpn.t.W", "rpn.c.b"):
            np.testing.assert_allclose(grads[name], numeric_grad(loss, params[name].values), rtol=1e-5, atol=1e-7)

    def test_decode_orders_by_score_and_clips(self):
        p = np.array([[0.9, 0.1], [0.5, 0.5]])
        c = np.array([[0.9, 0.1], [0.2, 0.8]])
        t = np.full((2, 2, 4), 3.0)
        proposals = decode_proposals(predictions(p, c, t), top_n=3)
        self.assertEqual(len(proposals), 3)
        self.assertEqual([round(pr.score, 6) for pr in proposals], [0.9, round(np.sqrt(0.4), 6), round(np.sqrt(0.1), 6)])
        self.assertEqual(proposals[0].box.to_list(), [0.0, 0.0, 5.0, 5.0])
        self.assertTrue(all(pr.source == "lowsrpn" for pr in proposals))

    def test_decode_rejects_zero_top_n(self):
        with self.assertRaises(ValueError):
            decode_proposals(predictions(np.ones((1, 1)) * 0.5, np.ones((1, 1)) * 0.5, np.ones((1, 1, 4))), 0)


class TestPgTargets(unittest.TestCase):
    def test_matches_exhaustive_containment(self):
        rng = np.random.default_rng(3)
        for trial in range(10):
            pgt = []
            for k in range(3):
                x0, y0 = rng.uniform(0, 20, size=2)
                w, h = rng.uniform(2, 12, size=2)
                pgt.append(PgtBox(Box(x0, y0, x0 + w, y0 + h), k))
            targets = assign_pg_targets(pgt, (8, 8), 4)
            for cell, (x, y) in enumerate(cell_centers((8, 8), 4)):
                inside = [k for k, item in enumerate(pgt) if item.box.x0 < x < item.box.x1 and item.box.y0 < y < item.box.y1]
                if not inside:
                    self.assertFalse(targets.positive[cell])
                    continue
                best = min(inside, key=lambda k: (pgt[k].box.area, k))
                self.assertTrue(targets.positive[cell])
                self.assertEqual(targets.assigned[cell], best)
                box = pgt[best].box
                np.testing.assert_allclose(targets.shape[cell], [x - box.x0, y - box.y0, box.x1 - x, box.y1 - y])

    def test_center_on_border_is_negative(self):
        targets = assign_pg_targets([PgtBox(Box(2, 2, 10, 10), 0)], (3, 3), 4)
        # centros em 2, 6, 10: apenas (6, 6) é estritamente interior
        self.assertEqual(list(np.flatnonzero(targets.positive)), [4])
        self.assertAlmostEqual(targets.centerness[4], 1.0)

    def test_no_pgt_no_positives(self):
        self.assertEqual(assign_pg_targets([], (4, 4), 4).num_positive, 0)


class TestLossPg(unittest.TestCase):
    def test_without_positives_is_mean_bce(self):
        p = np.full((2, 2), 0.25)
        targets = assign_pg_targets([], (2, 2), 4)
        loss, (d_p, d_c, d_t) = loss_pg(predictions(p, np.full((2, 2), 0.5), np.ones((2, 2, 4))), targets)
        self.assertAlmostEqual(loss, -np.log(0.75))
        np.testing.assert_array_equal(d_c, np.zeros(4))
        np.testing.assert_array_equal(d_t, np.zeros((4, 4)))
        np.testing.assert_allclose(d_p, np.full(4, 0.25 / 4))

    def test_gradients_match_numeric(self):
        rng = np.random.default_rng(4)
        targets = assign_pg_targets([PgtBox(Box(1, 1, 13, 9), 0), PgtBox(Box(6, 5, 15, 16), 1)], (4, 4), 4)
        self.assertGreater(targets.num_positive, 0)
        p_logit = rng.normal(size=(4, 4))
        c_logit = rng.normal(size=(4, 4))
        t = rng.uniform(1.0, 8.0, size=(4, 4, 4))

        def loss():
            return loss_pg(predictions(sigmoid(p_logit), sigmoid(c_logit), t), targets)[0]

        _, (d_p, d_c, d_t) = loss_pg(predictions(sigmoid(p_logit), sigmoid(c_logit), t), targets)
        np.testing.assert_allclose(d_p, numeric_grad(loss, p_logit).reshape(-1), atol=1e-7)
        np.testing.assert_allclose(d_c, numeric_grad(loss, c_logit).reshape(-1), atol=1e-7)
        np.testing.assert_allclose(d_t, numeric_grad(loss, t).reshape(-1, 4), atol=1e-7)


class TestOracleSegmenter(unittest.TestCase):
    def test_without_jitter_emits_hit_objects(self):
        objects = [ObjectInstance(Box(0, 0, 16, 16), 0), ObjectInstance(Box(20, 20, 30, 30), 1), ObjectInstance(Box(17, 0, 18, 1), 2)]
        proposals = oracle_grid_proposals(scene_with(objects), grid=4, jitter=0.0)
        # grade 4x4 em 32 px: pontos em 4, 12, 20, 28; o objeto minúsculo não é atingido
        self.assertEqual([p.box for p in proposals], [objects[0].box, objects[1].box])
        self.assertTrue(all(p.score == 1.0 and p.source == "segmenter" for p in proposals))

    def test_topmost_object_wins(self):
        objects = [ObjectInstance(Box(0, 0, 32, 32), 0), ObjectInstance(Box(8, 8, 24, 24), 1)]
        proposals = oracle_grid_proposals(scene_with(objects), grid=2, jitter=0.0)
        # pontos em 8 e 24: (8, 8) cai no objeto de cima; os demais no de baixo
        self.assertEqual({p.box for p in proposals}, {objects[0].box, objects[1].box})

    def test_deterministic_and_near_ground_truth(self):
        objects = [ObjectInstance(Box(2, 2, 14, 14), 0), ObjectInstance(Box(18, 16, 30, 30), 1)]
        scene = scene_with(objects)
        first = oracle_grid_proposals(scene, grid=8, jitter=0.1, seed=3)
        self.assertEqual(first, oracle_grid_proposals(scene, grid=8, jitter=0.1, seed=3))
        for proposal in first:
            self.assertGreater(max(iou(proposal.box, obj.box) for obj in objects), 0.5)
        for i, a in enumerate(first):
            for b in first[i + 1:]:
                self.assertLessEqual(iou(a.box, b.box), 0.95)

    def test_empty_scene(self):
        self.assertEqual(oracle_grid_proposals(scene_with([]), grid=8, jitter=0.1), [])

    def test_box_refine(self):
        objects = [ObjectInstance(Box(4, 4, 20, 20), 0)]
        scene = scene_with(objects)
        self.assertEqual(oracle_box_refine(scene, Box(5, 5, 19, 21), jitter=0.0), objects[0].box)
        far = Box(24, 24, 30, 30)
        self.assertEqual(oracle_box_refine(scene, far), far)
        self.assertEqual(oracle_box_refine(scene_with([]), far), far)


class TestMergeProposals(unittest.TestCase):
    def setUp(self):
        self.segmenter = [Proposal(Box(0, 0, 10, 10), 1.0, "segmenter")]
        self.learned = [
            Proposal(Box(20, 20, 30, 30), 0.2, "lowsrpn"),
            Proposal(Box(0, 0, 10, 10.1), 0.9, "lowsrpn"),
            Proposal(Box(5, 5, 25, 25), 0.6, "lowsrpn"),
        ]

    def test_segmenter_first_then_learned_without_duplicates(self):
        merged = merge_proposals(self.learned, self.segmenter, cap=10)
        self.assertEqual([p.source for p in merged], ["segmenter", "lowsrpn", "lowsrpn"])
        self.assertEqual([p.score for p in merged[1:]], [0.6, 0.2])

    def test_cap(self):
        self.assertEqual(len(merge_proposals(self.learned, self.segmenter, cap=2)), 2)
        with self.assertRaises(ValueError):
            merge_proposals(self.learned, self.segmenter, cap=0)

    def test_inference_uses_learned_only(self):
        merged = merge_proposals(self.learned, self.segmenter, cap=10, inference=True)
        self.assertEqual([p.score for p in merged], [0.9, 0.6, 0.2])


if __name__ == '__main__':
    unittest.main()
