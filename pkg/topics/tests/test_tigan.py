import tempfile
from pathlib import Path
from unittest import mock

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from topics.autodiff import Graph, backward, evaluate, finite_difference_gradient, input_gradient_node
from topics.exceptions import ConfigError, CorpusError, NonFiniteError, ShapeError, TrainingDivergedError
from topics.nn import EVAL, TRAIN, apply_batch_stats
from topics.tigan import (
    TiganConfig,
    TrainState,
    autoencoder_step,
    clipped_categorical_loss,
    clipped_categorical_node,
    critic_gradients,
    discriminator_forward,
    generator_forward,
    gradient_penalty,
    gradient_penalty_node,
    infogan_step,
    init_model,
    label_prior,
    noise_predictor_forward,
    reconstruction_loss,
    sample_codes,
    sample_noise,
    sample_topic_code,
    topic_classifier_forward,
    train,
    wgan_discriminator_loss,
)

from .fixtures import tiny_config, tiny_dataset, tiny_embeddings, tiny_vocab


class ConfigTests(SimpleTestCase):
    def test_defaults(self):
        config = TiganConfig()
        self.assertEqual((config.z_dim, config.lambda_mi, config.alpha_clip), (200, 0.1, 0.15))
        self.assertEqual((config.g_hidden, config.d_hidden, config.e_hidden), ((1000, 1000, 1000), (500, 500), (500,)))
        self.assertEqual((config.adam.lr, config.adam.beta1, config.adam.beta2), (0.0005, 0.5, 0.999))

    def test_validation(self):
        for bad in (dict(num_topics=1), dict(lambda_mi=-0.1), dict(alpha_clip=-1.0), dict(q_variant="lstm"), dict(batch_size=1)):
            with self.subTest(**bad), self.assertRaises(ConfigError):
                TiganConfig(**bad)

    def test_dict_form(self):
        config = tiny_config(autoencoder=False)
        self.assertEqual(TiganConfig.from_dict(config.to_dict()), config)


class InitModelTests(SimpleTestCase):
    def test_default_sized_generator(self):
        model = init_model(TiganConfig(num_topics=4, q_variant="linear"), 3000)
        self.assertEqual(model.generator.in_features, 204)
        self.assertEqual(model.generator.out_features, 3000)
        self.assertEqual(model.critic.out_features, 1)
        self.assertEqual(model.noise_predictor.out_features, 200)

    def test_linear_classifier_parameter_count(self):
        model = init_model(tiny_config(), 12)
        self.assertEqual(sum(v.size for v in model.classifier.parameters().values()), 12 * 3 + 3)

    def test_seeded(self):
        first, second = init_model(tiny_config(), 12), init_model(tiny_config(), 12)
        for name, value in first.tensors().items():
            assert_array_equal(value, second.tensors()[name])

    def test_sif_needs_embeddings(self):
        with self.assertRaises(ConfigError):
            init_model(tiny_config(q_variant="sif"), 12)

    def test_frozen_embeddings_are_not_parameters(self):
        frozen = init_model(tiny_config(q_variant="sif"), 12, tiny_embeddings())
        tuned = init_model(tiny_config(q_variant="sif", finetune_embeddings=True), 12, tiny_embeddings())
        self.assertNotIn("Q.embed", frozen.classifier.parameters())
        self.assertIn("Q.embed", tuned.classifier.parameters())
        self.assertIn("Q.embed", init_model(tiny_config(q_variant="mlp_random_embed"), 12).classifier.parameters())


class SamplingTests(SimpleTestCase):
    def test_single_topic(self):
        assert_array_equal(sample_topic_code(1, np.random.default_rng(0)), [1.0])

    def test_codes_are_uniform_one_hot(self):
        rng = np.random.default_rng(0)
        codes = sample_codes(4, 100000, rng)
        assert_array_equal(codes.sum(axis=1), np.ones(100000))
        assert_allclose(codes.mean(axis=0), np.full(4, 0.25), atol=0.01)
        self.assertEqual(sample_topic_code(7, rng).sum(), 1.0)

    def test_noise_moments(self):
        draws = np.concatenate([sample_noise(200, np.random.default_rng(s)) for s in range(500)])
        self.assertAlmostEqual(draws.mean(), 0.0, delta=0.02)
        self.assertAlmostEqual(draws.var(), 1.0, delta=0.03)
        assert_array_equal(sample_noise(5, np.random.default_rng(1)), sample_noise(5, np.random.default_rng(1)))

    def test_label_prior(self):
        dataset = tiny_dataset(rows=12, labels=3)
        assert_allclose(label_prior(dataset, 3), [1 / 3, 1 / 3, 1 / 3])
        with self.assertRaises(ConfigError):
            label_prior(dataset, 4)


class ForwardTests(SimpleTestCase):
    def setUp(self):
        self.config = tiny_config()
        self.model = init_model(self.config, 12)
        self.rng = np.random.default_rng(5)

    def test_generator_outputs_are_probabilities(self):
        codes = sample_codes(3, 6, self.rng)
        noise = self.rng.normal(size=(6, 4))
        out = generator_forward(self.model, codes, noise)
        self.assertEqual(out.shape, (6, 12))
        self.assertTrue(np.all((out > 0) & (out < 1)))
        assert_array_equal(out, generator_forward(self.model, codes, noise))

    def test_generator_shape_errors(self):
        with self.assertRaises(ShapeError):
            generator_forward(self.model, np.ones((2, 2)), np.ones((2, 4)))
        with self.assertRaises(ShapeError):
            generator_forward(self.model, np.eye(3)[:2], np.ones((3, 4)))

    def test_generator_noise_gradient(self):
        codes = sample_codes(3, 4, self.rng)
        noise = self.rng.normal(size=(4, 4))
        graph = Graph()
        z = graph.input("z")
        out = self.model.generator.build(graph, graph.concat(graph.input("c"), z), EVAL).output
        loss = graph.sum(graph.mul(out, graph.input("w")))
        bindings = {**self.model.generator.bindings(), "c": codes, "z": noise, "w": self.rng.normal(size=(4, 12))}
        analytic = evaluate(graph, bindings, input_gradient_node(graph, loss, z))
        numeric = finite_difference_gradient(lambda p: evaluate(graph, {**bindings, "z": p}, loss), noise.copy())
        assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-8)

    def test_zero_weight_critic_returns_its_bias(self):
        zeros = {name: np.zeros_like(value) for name, value in self.model.critic.parameters().items()}
        zeros["D.1.bias"] = np.array([0.7])
        self.model.critic.assign(zeros)
        assert_array_equal(discriminator_forward(self.model, self.rng.random((5, 12))), np.full(5, 0.7))

    def test_critic_scores_follow_row_permutation(self):
        batch = self.rng.random((6, 12))
        order = self.rng.permutation(6)
        assert_allclose(discriminator_forward(self.model, batch[order]), discriminator_forward(self.model, batch)[order], rtol=1e-12)

    def test_classifier_rows_are_distributions(self):
        probs = topic_classifier_forward(self.model, tiny_dataset().rows)
        assert_allclose(probs.sum(axis=1), np.ones(16), atol=1e-9)

    def test_zero_linear_classifier_is_uniform(self):
        self.model.classifier.assign({k: np.zeros_like(v) for k, v in self.model.classifier.parameters().items()})
        assert_allclose(topic_classifier_forward(self.model, tiny_dataset().rows), np.full((16, 3), 1 / 3))

    def test_sif_classifier_is_per_example(self):
        model = init_model(tiny_config(q_variant="sif"), 12, tiny_embeddings())
        rows = tiny_dataset().rows[:2]
        alone = topic_classifier_forward(model, rows)
        doubled = topic_classifier_forward(model, np.repeat(rows, 2, axis=0))
        assert_array_equal(doubled[::2], alone)
        assert_array_equal(np.argmax(doubled[1::2], axis=1), np.argmax(alone, axis=1))

    def test_sif_classifier_rejects_empty_rows(self):
        model = init_model(tiny_config(q_variant="sif"), 12, tiny_embeddings())
        with self.assertRaises(CorpusError):
            topic_classifier_forward(model, np.zeros((1, 12)))

    def test_zero_weight_noise_predictor(self):
        params = {k: np.zeros_like(v) for k, v in self.model.noise_predictor.parameters().items()}
        params["E.1.bias"] = np.arange(4.0)
        self.model.noise_predictor.assign(params)
        assert_array_equal(noise_predictor_forward(self.model, self.rng.random((3, 12))), np.tile(np.arange(4.0), (3, 1)))


class LossTests(SimpleTestCase):
    def test_wasserstein(self):
        self.assertAlmostEqual(wgan_discriminator_loss([1.5, 2.5], [1.0, 0.5, 1.5]), -1.0, places=12)
        self.assertEqual(wgan_discriminator_loss([0.3, 0.4], [0.3, 0.4]), 0.0)
        rng = np.random.default_rng(0)
        real, fake = rng.normal(size=20), rng.normal(size=30)
        self.assertAlmostEqual(wgan_discriminator_loss(real, fake), fake.mean() - real.mean(), places=12)

    def test_clipped_categorical(self):
        codes = np.eye(3)[[0, 2]]
        self.assertAlmostEqual(clipped_categorical_loss(codes, codes, 0.15), 0.15, places=12)
        hot = np.exp(-0.5)
        probs = np.array([[hot, (1 - hot) / 2, (1 - hot) / 2]])
        self.assertAlmostEqual(clipped_categorical_loss(codes[:1], probs, 0.15), 0.5, places=12)
        # a zero at the hot index is floored rather than producing inf
        self.assertAlmostEqual(clipped_categorical_loss(codes[:1], np.array([[0.0, 0.5, 0.5]]), 0.15), -np.log(1e-12))

    def test_clipped_examples_pass_no_gradient(self):
        graph = Graph()
        logits = graph.param("logits")
        loss = clipped_categorical_node(graph, graph.input("c"), graph.softmax(logits), 0.15)
        bindings = {"logits": np.array([[8.0, 0.0, 0.0], [0.2, 0.1, 0.0]]), "c": np.eye(3)[[0, 1]]}
        grad = backward(graph, loss, bindings)["logits"]
        assert_array_equal(grad[0], np.zeros(3))
        self.assertTrue(np.all(grad[1] != 0))
        numeric = finite_difference_gradient(lambda p: evaluate(graph, {**bindings, "logits": p}, loss), bindings["logits"].copy())
        assert_allclose(grad, numeric, rtol=1e-4, atol=1e-9)

    def test_reconstruction(self):
        x = (np.random.default_rng(1).random((4, 6)) < 0.5).astype(float)
        self.assertAlmostEqual(reconstruction_loss(x, np.full((4, 6), 0.5)), np.log(2), places=12)
        self.assertAlmostEqual(reconstruction_loss(x, x), 0.0, places=10)
        x_hat = np.random.default_rng(2).uniform(0.01, 0.99, size=(4, 6))
        expected = -np.mean(x * np.log(x_hat) + (1 - x) * np.log(1 - x_hat))
        self.assertAlmostEqual(reconstruction_loss(x, x_hat), expected, places=10)


class GradientPenaltyTests(SimpleTestCase):
    def linear_critic_model(self, norm):
        model = init_model(tiny_config(d_hidden=()), 12)
        w = np.random.default_rng(3).normal(size=(12, 1))
        model.critic.assign({"D.0.weight": w * norm / np.linalg.norm(w), "D.0.bias": np.array([0.3])})
        return model

    def test_unit_norm_linear_critic_has_no_penalty(self):
        model = self.linear_critic_model(1.0)
        rng = np.random.default_rng(0)
        self.assertAlmostEqual(gradient_penalty(model, rng.random((5, 12)), rng.random((5, 12)), rng), 0.0, places=12)

    def test_norm_three_gives_four(self):
        model = self.linear_critic_model(3.0)
        rng = np.random.default_rng(0)
        self.assertAlmostEqual(gradient_penalty(model, rng.random((5, 12)), rng.random((5, 12)), rng), 4.0, places=9)

    def test_parameter_gradient_through_the_second_order_path(self):
        model = init_model(tiny_config(d_hidden=(6,)), 12)
        rng = np.random.default_rng(4)
        graph = Graph()
        penalty = gradient_penalty_node(graph, model.critic, graph.input("x_hat"))
        bindings = {**model.critic.bindings(), "x_hat": rng.random((5, 12))}
        grads = backward(graph, penalty, bindings)
        for name in ("D.0.weight", "D.0.bias", "D.1.weight"):
            numeric = finite_difference_gradient(lambda p: evaluate(graph, {**bindings, name: p}, penalty), bindings[name].copy())
            assert_allclose(grads[name], numeric, rtol=1e-3, atol=1e-7)

    def test_second_order_path_through_two_hidden_layers(self):
        model = init_model(tiny_config(d_hidden=(6, 5)), 12)
        rng = np.random.default_rng(5)
        graph = Graph()
        penalty = gradient_penalty_node(graph, model.critic, graph.input("x_hat"))
        bindings = {**model.critic.bindings(), "x_hat": rng.random((5, 12))}
        grads = backward(graph, penalty, bindings)
        for name in ("D.0.weight", "D.0.bias", "D.1.weight", "D.1.bias", "D.2.weight"):
            with self.subTest(param=name):
                numeric = finite_difference_gradient(
                    lambda p: evaluate(graph, {**bindings, name: p}, penalty), bindings[name].copy()
                )
                assert_allclose(grads[name], numeric, rtol=1e-3, atol=1e-7)

    def test_mismatched_batches(self):
        model = init_model(tiny_config(), 12)
        with self.assertRaises(ShapeError):
            gradient_penalty(model, np.ones((3, 12)), np.ones((4, 12)), np.random.default_rng(0))


class StepTests(SimpleTestCase):
    def setUp(self):
        self.config = tiny_config()
        self.model = init_model(self.config, 12)
        self.state = TrainState.fresh(self.model)
        self.batch = tiny_dataset().rows[:8]

    def snapshot(self, network):
        return {k: v.copy() for k, v in self.model.parameters(network).items()}

    def assert_unchanged(self, before, network):
        for name, value in self.model.parameters(network).items():
            assert_array_equal(value, before[name])

    def assert_changed(self, before, network):
        self.assertTrue(any(not np.array_equal(v, before[k]) for k, v in self.model.parameters(network).items()))

    def test_linear_critic_gradient_is_analytic(self):
        model = init_model(tiny_config(d_hidden=()), 12)
        rng = np.random.default_rng(6)
        real, fake = rng.random((8, 12)), rng.random((8, 12))
        losses, grads = critic_gradients(model, real, fake, fake, lambda_gp=0.0)
        assert_allclose(grads["D.0.weight"][:, 0], fake.mean(axis=0) - real.mean(axis=0), rtol=1e-10)
        assert_allclose(grads["D.0.bias"], [0.0], atol=1e-12)
        self.assertEqual(losses["penalty"], 0.0)

    def test_infogan_step(self):
        before = {n: self.snapshot(n) for n in ("G", "D", "Q", "E")}
        _, state, losses = infogan_step(self.model, self.state, self.batch, self.config, np.random.default_rng(0))
        self.assertEqual(set(losses), {"loss_d", "wasserstein", "penalty", "loss_g", "loss_q"})
        self.assertTrue(all(np.isfinite(v) for v in losses.values()))
        self.assertGreaterEqual(losses["loss_q"], self.config.alpha_clip)
        self.assertEqual(state.adam["D"].step_count, self.config.critic_steps)
        self.assertEqual(state.adam["G"].step_count, 1)
        for network in ("G", "D", "Q"):
            self.assert_changed(before[network], network)
        self.assert_unchanged(before["E"], "E")

    def test_infogan_step_without_mutual_information_leaves_q_alone(self):
        config = tiny_config(lambda_mi=0.0)
        before = self.snapshot("Q")
        infogan_step(self.model, self.state, self.batch, config, np.random.default_rng(0))
        self.assert_unchanged(before, "Q")

    def test_steps_need_two_rows(self):
        with self.assertRaises(ShapeError):
            infogan_step(self.model, self.state, self.batch[:1], self.config, np.random.default_rng(0))
        with self.assertRaises(ShapeError):
            autoencoder_step(self.model, self.state, self.batch[:1], self.config)

    def test_autoencoder_step(self):
        before = {n: self.snapshot(n) for n in ("G", "D", "Q", "E")}
        _, _, first = autoencoder_step(self.model, self.state, self.batch, self.config)
        for network in ("G", "Q", "E"):
            self.assert_changed(before[network], network)
        self.assert_unchanged(before["D"], "D")
        for _ in range(49):
            autoencoder_step(self.model, self.state, self.batch, self.config)
        _, _, last = autoencoder_step(self.model, self.state, self.batch, self.config)
        self.assertLess(last["reconstruction"], first["reconstruction"])

    def test_generator_stays_in_range_after_training_steps(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            infogan_step(self.model, self.state, self.batch, self.config, rng)
        out = generator_forward(self.model, sample_codes(3, 10, rng), rng.normal(size=(10, 4)))
        self.assertTrue(np.all((out > 0) & (out < 1)))

    def test_critic_updates_leave_running_statistics_alone(self):
        config = tiny_config(critic_steps=3)
        with mock.patch("topics.tigan.apply_batch_stats", wraps=apply_batch_stats) as applied:
            infogan_step(self.model, self.state, self.batch, config, np.random.default_rng(0))
        self.assertEqual(applied.call_count, 1)

    def test_train_mode_generator_can_skip_the_running_statistics(self):
        before = {k: v.copy() for k, v in self.model.generator.buffers().items()}
        rng = np.random.default_rng(2)
        generator_forward(self.model, sample_codes(3, 6, rng), rng.normal(size=(6, 4)), TRAIN, update_stats=False)
        for name, value in self.model.generator.buffers().items():
            assert_array_equal(value, before[name])
        generator_forward(self.model, sample_codes(3, 6, rng), rng.normal(size=(6, 4)), TRAIN)
        self.assertFalse(np.array_equal(self.model.generator.buffers()["G.0.running_mean"], before["G.0.running_mean"]))


class ClassifierVariantStepTests(SimpleTestCase):
    """The embedding-based classifiers through both training phases."""

    def setUp(self):
        self.vocab = tiny_vocab()
        self.batch = tiny_dataset().rows[:8]

    def make(self, **overrides):
        config = tiny_config(**overrides)
        embeddings = tiny_embeddings() if config.q_variant == "sif" else None
        model = init_model(config, self.vocab, embeddings)
        return config, model, TrainState.fresh(model)

    def assert_a_raw_has_gradient(self, model):
        graph = Graph()
        x = graph.input("x")
        loss = graph.mean(graph.log(model.classifier.build(graph, x)))
        grads = backward(graph, loss, {**model.classifier.bindings(), "x": self.batch})
        self.assertGreater(np.abs(grads["Q.a_raw"]).max(), 0.0)

    def test_frozen_sif_embeddings(self):
        config, model, state = self.make(q_variant="sif")
        embed = model.classifier.embedding_matrix.copy()
        a_raw = model.classifier.params["Q.a_raw"].copy()
        self.assert_a_raw_has_gradient(model)
        infogan_step(model, state, self.batch, config, np.random.default_rng(0))
        autoencoder_step(model, state, self.batch, config)
        assert_array_equal(model.classifier.embedding_matrix, embed)
        self.assertFalse(np.array_equal(model.classifier.params["Q.a_raw"], a_raw))
        self.assertEqual(state.adam["Q"].step_count, 2)

    def test_random_embeddings_are_learned(self):
        config, model, state = self.make(q_variant="mlp_random_embed")
        self.assert_a_raw_has_gradient(model)
        for step in (
            lambda: infogan_step(model, state, self.batch, config, np.random.default_rng(0)),
            lambda: autoencoder_step(model, state, self.batch, config),
        ):
            embed = model.classifier.embedding_matrix.copy()
            a_raw = model.classifier.params["Q.a_raw"].copy()
            step()
            self.assertFalse(np.array_equal(model.classifier.embedding_matrix, embed))
            self.assertFalse(np.array_equal(model.classifier.params["Q.a_raw"], a_raw))

    def test_fine_tuned_sif_embeddings_move(self):
        config, model, state = self.make(q_variant="sif", finetune_embeddings=True)
        embed = model.classifier.embedding_matrix.copy()
        autoencoder_step(model, state, self.batch, config)
        self.assertFalse(np.array_equal(model.classifier.embedding_matrix, embed))

    def test_training_runs(self):
        dataset = tiny_dataset()
        for variant in ("sif", "mlp_random_embed"):
            with self.subTest(variant=variant):
                config = tiny_config(q_variant=variant, epochs=1)
                embeddings = tiny_embeddings() if variant == "sif" else None
                initial = init_model(config, self.vocab, embeddings).classifier.embedding_matrix
                result = train(config, dataset, self.vocab, embeddings)
                self.assertEqual(result.state.step, 2)
                self.assertTrue(all(np.isfinite(v) for h in result.state.history for k, v in h.items() if k != "phase"))
                moved = not np.array_equal(result.model.classifier.embedding_matrix, initial)
                self.assertEqual(moved, variant == "mlp_random_embed")
                probs = topic_classifier_forward(result.model, dataset.rows)
                assert_allclose(probs.sum(axis=1), 1.0)


class TrainTests(SimpleTestCase):
    def test_deterministic_and_complete(self):
        vocab, dataset = tiny_vocab(), tiny_dataset()
        with tempfile.TemporaryDirectory() as tmp:
            first = train(tiny_config(), dataset, vocab, output_dir=Path(tmp) / "a")
            second = train(tiny_config(), dataset, vocab, output_dir=Path(tmp) / "b")
            self.assertEqual([p.name for p in first.checkpoints], ["epoch-0001.ckpt", "epoch-0002.ckpt", "final.ckpt"])
            self.assertEqual(first.checkpoints[-1].read_bytes(), second.checkpoints[-1].read_bytes())
            log_lines = (Path(tmp) / "a" / "losses.jsonl").read_text().splitlines()
        # 16 documents in batches of 8 over 2 epochs, one infogan and one autoencoder record per step
        self.assertEqual(first.state.step, 4)
        self.assertEqual(len(first.state.history), 8)
        self.assertEqual(len(log_lines), 8)
        self.assertEqual(first.marks, [(1, 2), (2, 4), (2, 4)])
        for name, value in first.model.tensors().items():
            assert_array_equal(value, second.model.tensors()[name])

    def test_without_autoencoder(self):
        result = train(tiny_config(autoencoder=False, epochs=1), tiny_dataset(), tiny_vocab())
        self.assertEqual({h["phase"] for h in result.state.history}, {"infogan"})
        self.assertEqual(result.checkpoints, [])

    def test_label_prior_training(self):
        result = train(tiny_config(code_prior="labels", epochs=1), tiny_dataset(), tiny_vocab())
        assert_allclose(result.model.code_prior.sum(), 1.0)

    def test_single_row_tail_batch_is_skipped(self):
        result = train(tiny_config(epochs=1), tiny_dataset(rows=17), tiny_vocab())
        self.assertEqual(result.state.step, 2)

    def test_divergence_is_reported_with_the_step(self):
        with mock.patch("topics.tigan.infogan_step", side_effect=NonFiniteError("non-finite value at node 3")):
            with self.assertRaises(TrainingDivergedError) as caught:
                train(tiny_config(epochs=1), tiny_dataset(), tiny_vocab())
        self.assertEqual(caught.exception.step, 1)

    def test_vocabulary_width_must_match(self):
        with self.assertRaises(ShapeError):
            train(tiny_config(), tiny_dataset(), tiny_vocab(size=10))
