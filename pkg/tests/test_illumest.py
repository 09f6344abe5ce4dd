import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from night_restore.errors import ParameterError, ShapeMismatchError
from night_restore.illumest import (
    envelope_of,
    estimate_illumination,
    init_illumination,
    refine_step,
    retinex_divide,
)
from night_restore.imagecore import IlluminationMap, ImageBuffer, hadamard
from night_restore.seeding import generator


def ref_box_blur(a, window):
    """Mean over a window with edge replication, one pixel at a time."""
    h, w = a.shape
    r = window // 2
    out = np.zeros_like(a)
    for y in range(h):
        for x in range(w):
            total = 0.0
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    total += a[min(max(y + dy, 0), h - 1), min(max(x + dx, 0), w - 1)]
            out[y, x] = total / (window * window)
    return out


def ref_cascade(y, stages, kappa, window):
    x = np.clip(y.max(axis=2), 1e-3, 1.0)
    env = np.clip(ref_box_blur(x, window), 1e-3, 1.0)
    for _ in range(stages):
        x = x + kappa * np.maximum(0.0, env - x)
    return x


class TestInitIllumination(unittest.TestCase):
    def test_constant_gray(self):
        out = init_illumination(ImageBuffer(np.full((4, 4, 3), 0.3)))
        assert_array_equal(out.data, np.full((4, 4, 1), 0.3))

    def test_floor(self):
        out = init_illumination(ImageBuffer(np.zeros((4, 4, 3))))
        assert_array_equal(out.data, np.full((4, 4, 1), 1e-3))

    def test_channel_max(self):
        out = init_illumination(ImageBuffer(np.array([[[0.1, 0.5, 0.2]]])))
        self.assertEqual(float(out.data[0, 0, 0]), 0.5)

    def test_scaling_covariance_above_floor(self):
        y = ImageBuffer(0.2 + 0.8 * generator(0, "y").random((8, 8, 3)))
        scaled = ImageBuffer(0.5 * y.data)
        assert_allclose(init_illumination(scaled).data, 0.5 * init_illumination(y).data, rtol=0, atol=1e-15)


class TestRefineStep(unittest.TestCase):
    def test_no_residual_when_envelope_is_below(self):
        x = IlluminationMap(np.full((3, 3), 0.6))
        env = IlluminationMap(np.full((3, 3), 0.2))
        self.assertEqual(refine_step(x, env, 0.5), x)

    def test_full_pull(self):
        x = IlluminationMap(generator(1, "x").uniform(0.1, 0.9, (5, 5)))
        env = IlluminationMap(generator(2, "x").uniform(0.1, 0.9, (5, 5)))
        assert_array_equal(refine_step(x, env, 1.0).data, np.maximum(x.data, env.data))

    def test_half_pull(self):
        out = refine_step(IlluminationMap(np.array([[0.2]])), IlluminationMap(np.array([[0.6]])), 0.5)
        self.assertAlmostEqual(float(out.data[0, 0, 0]), 0.4, places=15)

    def test_kappa_range(self):
        x = IlluminationMap(np.full((2, 2), 0.5))
        with self.assertRaises(ParameterError):
            refine_step(x, x, 0.0)
        with self.assertRaises(ParameterError):
            refine_step(x, x, 1.5)

    def test_size_mismatch(self):
        with self.assertRaises(ShapeMismatchError):
            refine_step(IlluminationMap(np.full((2, 2), 0.5)), IlluminationMap(np.full((3, 2), 0.5)), 0.5)


class TestEstimateIllumination(unittest.TestCase):
    def test_constant_image_is_a_fixed_point(self):
        out = estimate_illumination(ImageBuffer(np.full((20, 20, 3), 0.25)))
        assert_allclose(out.data, np.full((20, 20, 1), 0.25), rtol=0, atol=1e-15)

    def test_matches_scalar_cascade(self):
        y = generator(3, "y").random((16, 16, 3)) * 0.4
        out = estimate_illumination(ImageBuffer(y), stages=3, kappa=0.5, blur_window=5)
        assert_allclose(out.data[:, :, 0], ref_cascade(y, 3, 0.5, 5), rtol=0, atol=1e-12)

    def test_stages_are_monotone(self):
        y = ImageBuffer(generator(4, "y").random((16, 16, 3)) * 0.3)
        previous = estimate_illumination(y, stages=1)
        for stages in range(2, 6):
            current = estimate_illumination(y, stages=stages)
            self.assertTrue(np.all(current.data >= previous.data), f"stage {stages} decreased the map")
            previous = current

    def test_full_pull_is_idempotent(self):
        y = ImageBuffer(generator(5, "y").random((16, 16, 3)))
        assert_array_equal(estimate_illumination(y, stages=1, kappa=1.0).data,
                           estimate_illumination(y, stages=7, kappa=1.0).data)

    def test_output_range(self):
        y = ImageBuffer(generator(6, "y").random((16, 16, 3)))
        out = estimate_illumination(y)
        self.assertGreaterEqual(float(out.data.min()), 1e-3)
        self.assertLessEqual(float(out.data.max()), 1.0)
        self.assertEqual(out.shape, (16, 16, 1))

    def test_even_window_rejected(self):
        y = ImageBuffer(np.full((8, 8, 3), 0.2))
        with self.assertRaises(ParameterError):
            estimate_illumination(y, blur_window=4)
        with self.assertRaises(ParameterError):
            envelope_of(init_illumination(y), 14)


class TestRetinexDivide(unittest.TestCase):
    def test_unit_illumination_is_identity(self):
        y = ImageBuffer(generator(7, "y").random((4, 4, 3)))
        self.assertEqual(retinex_divide(y, IlluminationMap(np.ones((4, 4)))), y)

    def test_direct_division(self):
        z = retinex_divide(ImageBuffer(np.array([[0.1]])), IlluminationMap(np.array([[0.5]])))
        self.assertAlmostEqual(float(z.data[0, 0, 0]), 0.2, places=15)

    def test_recovers_known_reflectance(self):
        z0 = generator(8, "z").random((8, 8, 3))
        x0 = generator(9, "x").uniform(1e-3, 1.0, (8, 8, 1))
        y = ImageBuffer(z0 * x0)
        z = retinex_divide(y, IlluminationMap(x0))
        assert_allclose(z.data, z0, rtol=0, atol=1e-12)

    def test_reconstruction_is_clamp_aware(self):
        y = ImageBuffer(generator(10, "y").random((8, 8, 3)))
        x = IlluminationMap(generator(11, "x").uniform(0.1, 1.0, (8, 8)))
        back = hadamard(retinex_divide(y, x), x)
        assert_allclose(back.data, np.minimum(y.data, x.data), rtol=0, atol=1e-12)

    def test_requires_illumination_map(self):
        with self.assertRaises(ShapeMismatchError):
            retinex_divide(ImageBuffer(np.full((2, 2), 0.5)), ImageBuffer(np.full((2, 2), 0.5)))


if __name__ == "__main__":
    unittest.main()
