import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from topics.autodiff import Graph, backward, evaluate, finite_difference_gradient
from topics.exceptions import NonFiniteError, ShapeError
from topics.nn import (
    EVAL,
    TRAIN,
    AdamHyper,
    AdamState,
    BatchNormLayer,
    Mlp,
    adam_step,
    batchnorm_forward,
    mlp_forward,
)


class MlpTests(SimpleTestCase):
    def setUp(self):
        self.mlp = Mlp.initialize("N", (6, 5, 4, 3), np.random.default_rng(0), batch_norm=True)

    def test_layout_and_names(self):
        params = self.mlp.parameters()
        self.assertEqual(params["N.0.weight"].shape, (6, 5))
        self.assertEqual(params["N.2.bias"].shape, (3,))
        self.assertIn("N.1.gain", params)
        # the output layer never gets batch norm
        self.assertNotIn("N.2.gain", params)
        self.assertEqual(sorted(self.mlp.buffers()), ["N.0.running_mean", "N.0.running_var", "N.1.running_mean", "N.1.running_var"])
        self.assertEqual((self.mlp.in_features, self.mlp.out_features), (6, 3))

    def test_seeded_initialization(self):
        other = Mlp.initialize("N", (6, 5, 4, 3), np.random.default_rng(0), batch_norm=True)
        for name, value in self.mlp.parameters().items():
            assert_array_equal(value, other.parameters()[name])

    def test_eval_mode_is_independent_of_batch_composition(self):
        rng = np.random.default_rng(1)
        batch = rng.normal(size=(7, 6))
        alone = mlp_forward(self.mlp, batch[:1], EVAL)
        together = mlp_forward(self.mlp, batch, EVAL)
        assert_array_equal(alone[0], together[0])

    def test_train_mode_needs_two_rows(self):
        with self.assertRaises(ShapeError):
            mlp_forward(self.mlp, np.ones((1, 6)), TRAIN)

    def test_width_is_checked(self):
        with self.assertRaises(ShapeError):
            mlp_forward(self.mlp, np.ones((3, 5)), EVAL)

    def test_train_mode_moves_running_statistics(self):
        before = self.mlp.buffers()["N.0.running_mean"].copy()
        mlp_forward(self.mlp, np.random.default_rng(2).normal(size=(8, 6)), TRAIN)
        self.assertFalse(np.array_equal(before, self.mlp.buffers()["N.0.running_mean"]))

    def test_eval_mode_leaves_running_statistics_alone(self):
        before = {k: v.copy() for k, v in self.mlp.buffers().items()}
        mlp_forward(self.mlp, np.random.default_rng(2).normal(size=(8, 6)), EVAL)
        for name, value in self.mlp.buffers().items():
            assert_array_equal(value, before[name])

    def test_train_mode_parameter_gradients(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(5, 6))
        graph = Graph()
        out = self.mlp.build(graph, graph.input("x"), TRAIN).output
        loss = graph.sum(graph.mul(out, graph.input("w")))
        bindings = {**self.mlp.bindings(), "x": x, "w": rng.normal(size=(5, 3))}
        grads = backward(graph, loss, bindings)
        for name in ("N.0.weight", "N.1.gain", "N.2.bias"):
            numeric = finite_difference_gradient(lambda p: evaluate(graph, {**bindings, name: p}, loss), bindings[name].copy())
            assert_allclose(grads[name], numeric, rtol=1e-4, atol=1e-7)

    def test_eval_mode_parameter_gradients(self):
        rng = np.random.default_rng(5)
        mlp_forward(self.mlp, rng.normal(size=(8, 6)), TRAIN)
        graph = Graph()
        out = self.mlp.build(graph, graph.input("x"), EVAL).output
        loss = graph.sum(graph.mul(out, graph.input("w")))
        bindings = {**self.mlp.bindings(), "x": rng.normal(size=(4, 6)), "w": rng.normal(size=(4, 3))}
        grads = backward(graph, loss, bindings)
        for name in ("N.0.weight", "N.0.shift", "N.1.gain", "N.2.weight"):
            with self.subTest(param=name):
                numeric = finite_difference_gradient(
                    lambda p: evaluate(graph, {**bindings, name: p}, loss), bindings[name].copy()
                )
                assert_allclose(grads[name], numeric, rtol=1e-4, atol=1e-7)

    def test_assign_checks_shapes(self):
        with self.assertRaises(ShapeError):
            self.mlp.assign({"N.0.weight": np.zeros((2, 2))})
        self.mlp.assign({"N.0.bias": np.full(5, 0.5), "other.0.bias": np.zeros(1)})
        assert_array_equal(self.mlp.parameters()["N.0.bias"], np.full(5, 0.5))


class BatchNormTests(SimpleTestCase):
    def test_train_mode_normalizes_and_updates_running_stats(self):
        layer = BatchNormLayer.initialize(3)
        batch = np.random.default_rng(4).normal(loc=2.0, scale=3.0, size=(50, 3))
        out = batchnorm_forward(layer, batch, TRAIN)
        assert_allclose(out.mean(axis=0), np.zeros(3), atol=1e-10)
        assert_allclose(out.var(axis=0), batch.var(axis=0) / (batch.var(axis=0) + 1e-5), rtol=1e-10)
        assert_allclose(layer.running_mean, 0.1 * batch.mean(axis=0), rtol=1e-12)
        assert_allclose(layer.running_var, 0.9 + 0.1 * batch.var(axis=0), rtol=1e-12)

    def test_standardizes_small_and_large_batches(self):
        rng = np.random.default_rng(6)
        for rows in (2, 3, 64):
            with self.subTest(rows=rows):
                batch = rng.normal(loc=-1.0, scale=2.0, size=(rows, 4))
                out = batchnorm_forward(BatchNormLayer.initialize(4), batch, TRAIN)
                assert_allclose(out.mean(axis=0), np.zeros(4), atol=1e-10)
                assert_allclose(out.var(axis=0), batch.var(axis=0) / (batch.var(axis=0) + 1e-5), rtol=1e-10)

    def test_two_point_batch(self):
        out = batchnorm_forward(BatchNormLayer.initialize(1, epsilon=1e-14), np.array([[1.0], [3.0]]), TRAIN)
        assert_allclose(out, [[-1.0], [1.0]], atol=1e-9)

    def test_eval_mode_uses_running_stats(self):
        layer = BatchNormLayer.initialize(2)
        layer.running_mean = np.array([1.0, -1.0])
        layer.running_var = np.array([4.0, 9.0])
        layer.gain = np.array([2.0, 1.0])
        layer.shift = np.array([0.0, 1.0])
        out = batchnorm_forward(layer, np.array([[3.0, 2.0]]), EVAL)
        assert_allclose(out, [[2.0 * 2.0 / np.sqrt(4.0 + 1e-5), 3.0 / np.sqrt(9.0 + 1e-5) + 1.0]])


class AdamTests(SimpleTestCase):
    def test_first_step_moves_by_lr_times_sign(self):
        params = {"w": np.array([1.0, -2.0, 3.0])}
        grads = {"w": np.array([0.5, -4.0, 2.0])}
        updated, state = adam_step(params, grads, AdamState.zeros_like(params))
        assert_allclose(updated["w"], params["w"] - 0.0005 * np.sign(grads["w"]), atol=1e-10)
        self.assertEqual(state.step_count, 1)
        # inputs are not modified
        assert_array_equal(params["w"], [1.0, -2.0, 3.0])

    def test_minimizes_a_quadratic(self):
        params = {"w": np.array([0.0])}
        state = AdamState.zeros_like(params)
        hyper = AdamHyper(lr=0.05)
        for _ in range(2000):
            params, state = adam_step(params, {"w": 2 * (params["w"] - 3.0)}, state, hyper)
        self.assertAlmostEqual(float(params["w"][0]), 3.0, delta=0.1)

    def test_first_update_ignores_gradient_scale(self):
        params = {"w": np.array([1.0, -2.0, 3.0]), "b": np.array([0.5])}
        grads = {"w": np.array([0.3, -0.02, 5.0]), "b": np.array([-1.5])}
        hyper = AdamHyper(lr=0.01, eps=0.0)
        base, _ = adam_step(params, grads, AdamState.zeros_like(params), hyper)
        for scale in (1e-3, 7.0, 1e4):
            with self.subTest(scale=scale):
                scaled, _ = adam_step(params, {k: v * scale for k, v in grads.items()}, AdamState.zeros_like(params), hyper)
                for name in params:
                    assert_allclose(scaled[name], base[name], rtol=1e-12)

    def test_hundred_steps_on_a_parabola(self):
        params = {"x": np.array([5.0])}
        state = AdamState.zeros_like(params)
        for _ in range(100):
            params, state = adam_step(params, {"x": 2 * params["x"]}, state, AdamHyper(lr=0.1))
        self.assertLess(abs(float(params["x"][0])), 0.5)

    def test_non_finite_gradient_names_the_parameter(self):
        params = {"layer.weight": np.zeros(2)}
        with self.assertRaisesMessage(NonFiniteError, "layer.weight"):
            adam_step(params, {"layer.weight": np.array([np.nan, 0.0])}, AdamState.zeros_like(params))

    def test_gradient_shape_mismatch(self):
        params = {"w": np.zeros(2)}
        with self.assertRaises(ShapeError):
            adam_step(params, {"w": np.zeros(3)}, AdamState.zeros_like(params))
