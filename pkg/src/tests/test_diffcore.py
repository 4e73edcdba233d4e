import unittest

import numpy as np

from src.domain.diffcore import (
    BCE_EPS,
    SgdOptimizer,
    accumulate,
    affine_backward,
    affine_forward,
    bce,
    bce_grad,
    grad_check,
    iou_loss,
    iou_loss_batch,
    l2_normalize_rows,
    l2_normalize_rows_backward,
    sgd_step,
    sigmoid,
    smooth_l1,
    softmax_backward,
    softmax_cols,
    softmax_rows,
)
from src.domain.entities import LtrbTargets, ParamTensor, SgdConfig
from src.domain.errors import GradCheckError, ShapeMismatchError


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


class TestActivations(unittest.TestCase):
    def test_sigmoid_is_stable_at_extremes(self):
        values = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
        np.testing.assert_allclose(values, [0.0, 0.5, 1.0])
        self.assertTrue(np.all(np.isfinite(values)))

    def test_softmax_rows_and_cols_normalize(self):
        m = np.random.default_rng(0).normal(size=(4, 3)) * 50
        np.testing.assert_allclose(softmax_rows(m).sum(axis=1), np.ones(4))
        np.testing.assert_allclose(softmax_cols(m).sum(axis=0), np.ones(3))

    def test_softmax_backward_matches_numeric(self):
        rng = np.random.default_rng(1)
        m = rng.normal(size=(3, 4))
        weights = rng.normal(size=(3, 4))
        for axis, fn in ((1, softmax_rows), (0, softmax_cols)):
            s = fn(m)
            analytic = softmax_backward(weights, s, axis)
            numeric = numeric_grad(lambda: float((fn(m) * weights).sum()), m)
            np.testing.assert_allclose(analytic, numeric, atol=1e-7)

    def test_l2_normalize_zero_row_stays_zero(self):
        x = np.array([[3.0, 4.0], [0.0, 0.0]])
        xhat, norms = l2_normalize_rows(x)
        np.testing.assert_allclose(xhat, [[0.6, 0.8], [0.0, 0.0]])
        dx = l2_normalize_rows_backward(np.ones_like(x), xhat, norms)
        np.testing.assert_array_equal(dx[1], [0.0, 0.0])


class TestLosses(unittest.TestCase):
    def test_bce_is_clipped(self):
        self.assertAlmostEqual(float(bce(0.0, 1.0)), -np.log(BCE_EPS))
        self.assertAlmostEqual(float(bce(1.0, 0.0)), -np.log(BCE_EPS))
        self.assertTrue(np.isfinite(bce(np.array([0.0, 1.0]), np.array([1.0, 0.0]))).all())

    def test_bce_grad_matches_numeric_inside_range(self):
        p = np.array([0.2, 0.7, 0.5])
        y = np.array([1.0, 0.0, 1.0])
        numeric = numeric_grad(lambda: float(bce(p, y).sum()), p)
        np.testing.assert_allclose(bce_grad(p, y), numeric, rtol=1e-6)

    def test_bce_grad_is_zero_where_clipped(self):
        self.assertEqual(float(bce_grad(np.array([0.0]), np.array([1.0]))[0]), 0.0)

    def test_smooth_l1_values(self):
        self.assertAlmostEqual(smooth_l1(np.array([0.5]), np.array([0.0])), 0.125)
        self.assertAlmostEqual(smooth_l1(np.array([3.0]), np.array([1.0])), 1.5)

    def test_iou_loss_known_values(self):
        same = LtrbTargets(2, 3, 4, 5)
        self.assertAlmostEqual(iou_loss(same, same), 0.0)
        # caixas 2x2 e 4x4 na mesma localização central: IoU = 4/16
        self.assertAlmostEqual(iou_loss(LtrbTargets(1, 1, 1, 1), LtrbTargets(2, 2, 2, 2)), 0.75)

    def test_iou_loss_gradient_matches_numeric(self):
        rng = np.random.default_rng(2)
        t = rng.uniform(1.0, 6.0, size=(5, 4))
        t_star = rng.uniform(1.0, 6.0, size=(5, 4))
        _, grad = iou_loss_batch(t, t_star)
        numeric = numeric_grad(lambda: float(iou_loss_batch(t, t_star)[0].sum()), t)
        np.testing.assert_allclose(grad, numeric, atol=1e-6)


class TestAffine(unittest.TestCase):
    def test_backward_matches_numeric(self):
        rng = np.random.default_rng(3)
        weight = ParamTensor("w", rng.normal(size=(4, 3)))
        bias = ParamTensor("b", rng.normal(size=3))
        x = rng.normal(size=(5, 4))
        upstream = rng.normal(size=(5, 3))

        def loss():
            y, _ = affine_forward(x, weight, bias)
            return float((y * upstream).sum())

        _, cache = affine_forward(x, weight, bias)
        grads = {}
        dx = affine_backward(upstream, cache, grads)
        np.testing.assert_allclose(grads["w"], numeric_grad(loss, weight.values), atol=1e-6)
        np.testing.assert_allclose(grads["b"], numeric_grad(loss, bias.values), atol=1e-6)
        np.testing.assert_allclose(dx, numeric_grad(loss, x), atol=1e-6)

    def test_shape_mismatch_names_tensor(self):
        weight = ParamTensor("mlp.fc1.W", np.zeros((4, 3)))
        bias = ParamTensor("mlp.fc1.b", np.zeros(3))
        with self.assertRaises(ShapeMismatchError) as cm:
            affine_forward(np.zeros(5), weight, bias)
        self.assertIn("mlp.fc1.W", str(cm.exception))

    def test_accumulate_targets_buffer_or_param(self):
        param = ParamTensor("p", np.zeros(2))
        accumulate(None, param, np.array([1.0, 2.0]))
        np.testing.assert_array_equal(param.grad, [1.0, 2.0])
        grads = {}
        accumulate(grads, param, np.array([1.0, 1.0]))
        accumulate(grads, param, np.array([1.0, 1.0]))
        np.testing.assert_array_equal(grads["p"], [2.0, 2.0])
        with self.assertRaises(ShapeMismatchError):
            accumulate(grads, param, np.zeros(3))


class TestSgd(unittest.TestCase):
    def test_momentum_update(self):
        param = ParamTensor("w", np.array([1.0]))
        optimizer = SgdOptimizer(SgdConfig(learning_rate=0.1, momentum=0.9, weight_decay=0.0))
        param.grad[...] = 0.5
        optimizer.step([param])
        np.testing.assert_allclose(param.values, [0.95])
        np.testing.assert_array_equal(param.grad, [0.0])
        param.grad[...] = 0.5
        optimizer.step([param])
        np.testing.assert_allclose(param.values, [0.855])

    def test_weight_decay_and_explicit_learning_rate(self):
        param = ParamTensor("w", np.array([2.0]))
        velocity = sgd_step([param], SgdConfig(learning_rate=0.5, momentum=0.0, weight_decay=0.1))
        np.testing.assert_allclose(param.values, [1.9])
        np.testing.assert_allclose(velocity["w"], [0.2])

    def test_invalid_config(self):
        with self.assertRaises(ValueError):
            SgdConfig(learning_rate=-1.0)
        with self.assertRaises(ValueError):
            SgdConfig(momentum=1.0)


class TestGradCheck(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(4)
        self.param = ParamTensor("w", rng.normal(size=(3, 2)))

    def loss(self):
        return float(np.sum(np.tanh(self.param.values) ** 2))

    def analytic(self):
        t = np.tanh(self.param.values)
        return {"w": 2 * t * (1 - t * t)}

    def test_correct_gradient_passes(self):
        report = grad_check(self.loss, [self.param], self.analytic())
        self.assertTrue(report.passed)
        self.assertLess(report.max_rel_error, 1e-4)

    def test_corrupted_gradient_is_detected(self):
        corrupted = self.analytic()
        corrupted["w"] = corrupted["w"] + 1.0
        report = grad_check(self.loss, [self.param], corrupted)
        self.assertFalse(report.passed)
        self.assertEqual(report.failures[0].name, "w")

    def test_values_are_restored(self):
        before = self.param.values.copy()
        grad_check(self.loss, [self.param], self.analytic())
        np.testing.assert_array_equal(self.param.values, before)

    def test_non_finite_loss_raises(self):
        with self.assertRaises(GradCheckError):
            grad_check(lambda: float("nan"), [self.param], self.analytic())


if __name__ == '__main__':
    unittest.main()
