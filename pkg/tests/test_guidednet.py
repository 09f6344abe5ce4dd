import struct
import tempfile
import unittest
from pathlib import Path

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from night_restore.diffcore import build_schedule
from night_restore.errors import ArchitectureMismatchError, ParameterError, ShapeMismatchError
from night_restore.guidednet import (
    Architecture,
    CrossAttentionParams,
    TinyDenoiser,
    TrainingBatch,
    TrainingConfig,
    attend,
    attention_weights,
    cross_attention,
    denoise_predict,
    finite_difference_gradient,
    flatten_spatial,
    gradient_relative_error,
    illum_encoder,
    illumination_ablation,
    init_params,
    load_model,
    loss_and_gradient,
    save_model,
    smooth_trace,
    train_toy,
    unflatten_spatial,
)
from night_restore.seeding import generator
from night_restore.toyset import make_toy_dataset

SMALL = Architecture(c0=2, c1=3, temb=4)


def random_batch(seed, n=2, size=4):
    rng = generator(seed, "batch")
    x0 = rng.random((n, size, size, 3))
    cond = 0.3 * rng.random((n, size, size, 3))
    illum = rng.uniform(0.05, 1.0, (n, size, size, 1))
    t = rng.integers(1, 1001, size=n)
    eps = rng.standard_normal((n, size, size, 3))
    return TrainingBatch(x0, cond, illum, t, eps)


class TestArchitecture(unittest.TestCase):
    def test_parameter_counts(self):
        self.assertEqual(Architecture().param_count, 4769)
        self.assertEqual(SMALL.param_count, 477)

    def test_single_resolution_drop(self):
        convs = [name for name, shape in Architecture().layout() if name.endswith(".w") and len(shape) == 4]
        self.assertEqual(convs, ["enc0.w", "enc1.w", "in.w", "down.w", "up.w", "mid.w", "out.w"])

    def test_odd_time_width_rejected(self):
        with self.assertRaises(ParameterError):
            Architecture(temb=5)

    def test_unpack_checks_length(self):
        with self.assertRaises(ArchitectureMismatchError):
            SMALL.unpack(np.zeros(476))

    def test_pack_inverts_unpack(self):
        theta = generator(0, "theta").standard_normal(SMALL.param_count)
        assert_array_equal(SMALL.pack(SMALL.unpack(theta)), theta)

    def test_value_projections_start_at_zero(self):
        blocks = SMALL.unpack(init_params(SMALL, 3))
        self.assertFalse(blocks["att0.v"].any())
        self.assertFalse(blocks["att1.v"].any())
        self.assertTrue(blocks["att0.q"].any())


class TestAttention(unittest.TestCase):
    def test_rows_are_stochastic(self):
        rng = generator(0, "attention")
        worst = 0.0
        for _ in range(1000):
            n, m, d = rng.integers(1, 9, size=3)
            w = attention_weights(5.0 * rng.standard_normal((n, d)), 5.0 * rng.standard_normal((m, d)))
            self.assertTrue(np.all(w >= 0.0))
            worst = max(worst, float(np.abs(w.sum(axis=-1) - 1.0).max()))
        self.assertLess(worst, 1e-9)

    def test_key_shift_leaves_weights_unchanged(self):
        rng = generator(3, "attention")
        for _ in range(200):
            n, m, d = rng.integers(1, 9, size=3)
            q, k = rng.standard_normal((n, d)), rng.standard_normal((m, d))
            # q . (k + u) moves each score row by the constant q . u
            shifted = attention_weights(q, k + 20.0 * rng.standard_normal(d))
            assert_allclose(shifted, attention_weights(q, k), rtol=0, atol=1e-9)

    def test_key_value_order_does_not_matter(self):
        rng = generator(4, "attention")
        for _ in range(200):
            n, m, d, c = rng.integers(1, 9, size=4)
            q, k, v = rng.standard_normal((n, d)), rng.standard_normal((m, d)), rng.standard_normal((m, c))
            perm = rng.permutation(m)
            assert_allclose(attend(q, k[perm], v[perm]), attend(q, k, v), rtol=0, atol=1e-12)

    def test_large_scores_stay_finite(self):
        rng = generator(5, "attention")
        for _ in range(2000):
            n, m, d = rng.integers(1, 9, size=3)
            scale = 10.0 ** rng.uniform(2.0, 4.0)
            w = attention_weights(scale * rng.standard_normal((n, d)), scale * rng.standard_normal((m, d)))
            self.assertTrue(np.all(np.isfinite(w)))
            assert_allclose(w.sum(axis=-1), 1.0, rtol=0, atol=1e-9)

    def test_flatten_is_row_major(self):
        features = np.arange(24, dtype=np.float64).reshape(2, 4, 3)
        tokens = flatten_spatial(features)
        assert_array_equal(tokens[5], features[1, 1])
        assert_array_equal(unflatten_spatial(tokens, 2, 4), features)

    def test_zero_value_projection_leaves_layer_unchanged(self):
        rng = generator(1, "attention")
        params = CrossAttentionParams(rng.standard_normal((4, 4)), rng.standard_normal((4, 4)), np.zeros((4, 4)))
        layer = rng.standard_normal((6, 4))
        assert_array_equal(cross_attention(rng.standard_normal((6, 4)), layer, params), layer)

    def test_single_layer_token_broadcasts(self):
        rng = generator(2, "attention")
        params = CrossAttentionParams(*(rng.standard_normal((3, 3)) for _ in range(3)))
        layer = rng.standard_normal((1, 3))
        out = cross_attention(rng.standard_normal((5, 3)), layer, params)
        # one key: every query takes its value
        assert_allclose(out, np.repeat(layer + layer @ params.w_v, 5, axis=0), rtol=0, atol=1e-12)

    def test_shape_errors(self):
        params = CrossAttentionParams(np.eye(3), np.eye(3), np.eye(3))
        with self.assertRaises(ShapeMismatchError):
            cross_attention(np.zeros((4, 2)), np.zeros((4, 3)), params)
        with self.assertRaises(ShapeMismatchError):
            cross_attention(np.zeros((4, 3)), np.zeros((3, 3)), params)
        with self.assertRaises(ShapeMismatchError):
            CrossAttentionParams(np.eye(3), np.eye(3), np.eye(2))


class TestIllumEncoder(unittest.TestCase):
    def test_pyramid_shapes(self):
        illum = generator(0, "illum").uniform(0.1, 1.0, (2, 16, 16, 1))
        f0, f1 = illum_encoder(illum, init_params(Architecture()), Architecture())
        self.assertEqual(f0.shape, (2, 16, 16, 8))
        self.assertEqual(f1.shape, (2, 8, 8, 12))

    def test_zero_map_with_zero_biases(self):
        f0, f1 = illum_encoder(np.zeros((1, 8, 8, 1)), init_params(SMALL, 1), SMALL)
        self.assertFalse(f0.any())
        self.assertFalse(f1.any())

    def test_deterministic(self):
        illum = generator(1, "illum").uniform(0.1, 1.0, (1, 8, 8, 1))
        theta = init_params(SMALL, 4)
        for a, b in zip(illum_encoder(illum, theta, SMALL), illum_encoder(illum, theta, SMALL)):
            assert_array_equal(a, b)

    def test_odd_size_rejected(self):
        with self.assertRaises(ShapeMismatchError):
            illum_encoder(np.ones((1, 7, 8, 1)), init_params(SMALL), SMALL)

    def test_illumination_reaches_the_output_through_value_projections(self):
        rng = generator(6, "illum")
        x_t = rng.standard_normal((8, 8, 3))
        cond = 0.3 * rng.random((8, 8, 3))
        dim, bright = rng.uniform(0.05, 0.2, (8, 8, 1)), rng.uniform(0.6, 1.0, (8, 8, 1))
        theta = init_params(SMALL, 0)
        assert_array_equal(denoise_predict(x_t, cond, dim, 300, theta, SMALL),
                           denoise_predict(x_t, cond, bright, 300, theta, SMALL))
        values = SMALL.mask_of("att0.v", "att1.v")
        theta = theta.copy()
        theta[values] = 0.5 * rng.standard_normal(int(values.sum()))
        gap = np.abs(denoise_predict(x_t, cond, dim, 300, theta, SMALL)
                     - denoise_predict(x_t, cond, bright, 300, theta, SMALL)).max()
        self.assertGreater(float(gap), 1e-6)


class TestGradient(unittest.TestCase):
    def test_matches_central_differences(self):
        sched = build_schedule()
        batch = random_batch(0)
        theta = 0.3 * generator(5, "theta").standard_normal(SMALL.param_count)
        _, analytic = loss_and_gradient(theta, batch, SMALL, sched)
        numeric = finite_difference_gradient(theta, batch, SMALL, sched)
        error = gradient_relative_error(analytic, numeric)
        self.assertLess(float(error.max()), 1e-4, f"worst coordinate {int(error.argmax())}")

    def test_unguided_model_ignores_encoder(self):
        arch = Architecture(c0=2, c1=3, temb=4, inject_illumination=False)
        theta = 0.5 * generator(6, "theta").standard_normal(arch.param_count)
        _, grad = loss_and_gradient(theta, random_batch(1), arch, build_schedule())
        self.assertFalse(grad[arch.mask_of("enc", "att")].any())

    def test_frozen_mask(self):
        theta = init_params(SMALL, 0)
        frozen = SMALL.mask_of("out")
        _, grad = loss_and_gradient(theta, random_batch(2), SMALL, build_schedule(), frozen)
        self.assertFalse(grad[frozen].any())

    def test_batch_shapes_are_checked(self):
        batch = random_batch(3)
        with self.assertRaises(ShapeMismatchError):
            TrainingBatch(batch.x0, batch.condition, batch.illumination, batch.t[:1], batch.eps)
        with self.assertRaises(ShapeMismatchError):
            TrainingBatch(batch.x0[:, :3, :3], batch.condition[:, :3, :3], batch.illumination[:, :3, :3],
                          batch.t, batch.eps[:, :3, :3])


class TestTraining(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.ablation = illumination_ablation(make_toy_dataset(64), TrainingConfig(steps=500))

    def test_smoothed_loss_halves(self):
        smoothed = self.ablation.guided.smoothed
        self.assertEqual(len(self.ablation.guided.trace), 500)
        self.assertLessEqual(smoothed[-1], 0.5 * smoothed[0])

    def test_illumination_guidance_helps(self):
        guided, unguided = self.ablation.final_losses
        self.assertLess(guided, unguided)

    def test_both_runs_start_from_the_same_loss(self):
        self.assertAlmostEqual(self.ablation.guided.trace[0], self.ablation.unguided.trace[0], places=12)


class TestTrainingMechanics(unittest.TestCase):
    def setUp(self):
        self.dataset = make_toy_dataset(4, size=8)

    def test_zero_learning_rate_keeps_parameters(self):
        config = TrainingConfig(steps=3, learning_rate=0.0, seed=2, architecture=SMALL)
        result = train_toy(self.dataset, config)
        assert_array_equal(result.theta, init_params(SMALL, 2))
        self.assertEqual(len(set(result.trace)), 1)

    def test_training_is_deterministic(self):
        config = TrainingConfig(steps=5, seed=1, architecture=SMALL)
        self.assertEqual(train_toy(self.dataset, config).trace, train_toy(self.dataset, config).trace)

    def test_denoiser_predicts_latent_shape(self):
        config = TrainingConfig(steps=1, architecture=SMALL)
        denoiser = train_toy(self.dataset, config).denoiser
        clean, degraded, illum = self.dataset[0]
        out = denoiser(clean.data, degraded.data, illum.data, 10)
        self.assertEqual(out.shape, (8, 8, 3))

    def test_smoothing_window(self):
        assert_allclose(smooth_trace([4.0, 2.0, 0.0, 6.0], 2), [4.0, 3.0, 1.0, 3.0])


class TestPersistence(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.path = Path(self._tmp.name) / "model.bin"

    def tearDown(self):
        self._tmp.cleanup()

    def test_round_trip(self):
        theta = generator(0, "theta").standard_normal(SMALL.param_count)
        save_model(self.path, SMALL, theta)
        model = load_model(self.path)
        self.assertIsInstance(model, TinyDenoiser)
        self.assertEqual(model.arch, SMALL)
        assert_array_equal(model.theta, theta)

    def test_header_layout(self):
        save_model(self.path, SMALL, init_params(SMALL))
        magic, version, _ = struct.unpack_from("<4sHI", self.path.read_bytes())
        self.assertEqual((magic, version), (b"IGDN", 1))

    def test_wrong_magic(self):
        self.path.write_bytes(b"NOPE" + bytes(20))
        with self.assertRaises(ArchitectureMismatchError):
            load_model(self.path)

    def test_truncated_parameters(self):
        save_model(self.path, SMALL, init_params(SMALL))
        self.path.write_bytes(self.path.read_bytes()[:-8])
        with self.assertRaises(ArchitectureMismatchError):
            load_model(self.path)

    def test_count_must_fit_descriptor(self):
        with self.assertRaises(ArchitectureMismatchError):
            save_model(self.path, SMALL, np.zeros(Architecture().param_count))


if __name__ == "__main__":
    unittest.main()
