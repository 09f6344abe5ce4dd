import math
import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from night_restore.errors import ParameterError, ShapeMismatchError
from night_restore.imagecore import ImageBuffer
from night_restore.seeding import generator
from night_restore.weathersynth import (
    DegradationKind,
    StreakGeometry,
    WeatherParams,
    composite_haze,
    composite_rain,
    composite_raindrop,
    composite_snow,
    gen_particle_field,
    gen_rain_streaks,
    gen_transmission,
    particle_count,
    sample_weather_params,
    synthesize_weather,
)

H = W = 8


def clamp(v):
    return min(1.0, max(0.0, v))


# scalar references, one pixel at a time

def ref_raindrop(c, m, r):
    out = np.zeros_like(c)
    for y in range(c.shape[0]):
        for x in range(c.shape[1]):
            for k in range(c.shape[2]):
                out[y, x, k] = clamp((1.0 - m[y, x, 0]) * c[y, x, k] + r[y, x, k])
    return out


def ref_rain(c, streaks, t, a):
    out = np.zeros_like(c)
    for y in range(c.shape[0]):
        for x in range(c.shape[1]):
            for k in range(c.shape[2]):
                scene = c[y, x, k] + sum(s[y, x, 0] for s in streaks)
                out[y, x, k] = clamp(t[y, x, 0] * scene + (1.0 - t[y, x, 0]) * a[k])
    return out


def ref_snow(c, m, s):
    out = np.zeros_like(c)
    for y in range(c.shape[0]):
        for x in range(c.shape[1]):
            for k in range(c.shape[2]):
                out[y, x, k] = clamp((1.0 - m[y, x, 0]) * c[y, x, k] + m[y, x, 0] * s[y, x, 0])
    return out


def ref_haze(c, t, a):
    out = np.zeros_like(c)
    for y in range(c.shape[0]):
        for x in range(c.shape[1]):
            for k in range(c.shape[2]):
                out[y, x, k] = clamp(t[y, x, 0] * c[y, x, k] + (1.0 - t[y, x, 0]) * a[k])
    return out


class TestCompositingAgainstScalarReference(unittest.TestCase):
    TRIALS = 100

    def setUp(self):
        self.rng = generator(2024, "compositing-oracle")

    def unit(self, channels):
        return self.rng.random((H, W, channels))

    def test_raindrop(self):
        for _ in range(self.TRIALS):
            c, m, r = self.unit(3), self.unit(1), 0.5 * self.unit(3)
            got = composite_raindrop(ImageBuffer(c), ImageBuffer(m), ImageBuffer(r)).data
            assert_allclose(got, ref_raindrop(c, m, r), rtol=0, atol=1e-12)

    def test_rain(self):
        for _ in range(self.TRIALS):
            c, t = self.unit(3), self.unit(1)
            streaks = [0.3 * self.unit(1) for _ in range(3)]
            light = tuple(float(v) for v in self.rng.uniform(0.7, 0.9, 3))
            got = composite_rain(ImageBuffer(c), [ImageBuffer(s) for s in streaks], ImageBuffer(t), light).data
            assert_allclose(got, ref_rain(c, streaks, t, light), rtol=0, atol=1e-12)

    def test_snow(self):
        for _ in range(self.TRIALS):
            c, m, s = self.unit(3), self.unit(1), self.unit(1)
            got = composite_snow(ImageBuffer(c), ImageBuffer(m), ImageBuffer(s)).data
            assert_allclose(got, ref_snow(c, m, s), rtol=0, atol=1e-12)

    def test_haze(self):
        for _ in range(self.TRIALS):
            c, t = self.unit(3), self.unit(1)
            light = float(self.rng.uniform(0.7, 0.9))
            got = composite_haze(ImageBuffer(c), ImageBuffer(t), light).data
            assert_allclose(got, ref_haze(c, t, [light] * 3), rtol=0, atol=1e-12)


class TestCompositingDegenerateCases(unittest.TestCase):
    def setUp(self):
        self.clean = ImageBuffer(generator(1, "clean").random((H, W, 3)))
        self.zero = ImageBuffer(np.zeros((H, W)))
        self.one = ImageBuffer(np.ones((H, W)))

    def test_empty_raindrop_mask_is_identity(self):
        residual = ImageBuffer(np.zeros((H, W, 3)))
        self.assertEqual(composite_raindrop(self.clean, self.zero, residual), self.clean)

    def test_empty_snow_mask_is_identity(self):
        self.assertEqual(composite_snow(self.clean, self.zero, self.one), self.clean)

    def test_full_transmission_without_streaks_is_identity(self):
        self.assertEqual(composite_haze(self.clean, self.one, 0.8), self.clean)
        self.assertEqual(composite_rain(self.clean, [], self.one, 0.8), self.clean)

    def test_zero_transmission_gives_atmospheric_light(self):
        out = composite_haze(self.clean, self.zero, (0.7, 0.8, 0.9))
        assert_array_equal(out.data, np.broadcast_to([0.7, 0.8, 0.9], (H, W, 3)))

    def test_full_snow_mask_gives_flake_value(self):
        flakes = ImageBuffer(np.full((H, W), 0.9))
        assert_array_equal(composite_snow(self.clean, self.one, flakes).data, np.full((H, W, 3), 0.9))

    def test_output_is_clamped(self):
        residual = ImageBuffer(np.ones((H, W, 3)))
        out = composite_raindrop(ImageBuffer(np.ones((H, W, 3))), self.zero, residual)
        self.assertEqual(float(out.data.max()), 1.0)

    def test_mask_outside_unit_interval_rejected(self):
        with self.assertRaises(ParameterError):
            composite_snow(self.clean, ImageBuffer(np.full((H, W), 1.5)), self.one)

    def test_multichannel_mask_rejected(self):
        with self.assertRaises(ShapeMismatchError):
            composite_snow(self.clean, ImageBuffer(np.zeros((H, W, 3))), self.one)

    def test_negative_streaks_rejected(self):
        with self.assertRaises(ParameterError):
            composite_rain(self.clean, [ImageBuffer(np.full((H, W), -0.1))], self.one)

    def test_size_mismatch_rejected(self):
        with self.assertRaises(ShapeMismatchError):
            composite_haze(self.clean, ImageBuffer(np.ones((H + 1, W))))


class TestGenerators(unittest.TestCase):
    def test_transmission_in_unit_interval_and_deterministic(self):
        a = gen_transmission(5, 32, 24, 1.0, 0.2)
        self.assertEqual(a, gen_transmission(5, 32, 24, 1.0, 0.2))
        self.assertGreater(float(a.data.min()), 0.0)
        self.assertLessEqual(float(a.data.max()), 1.0)

    def test_full_uniformity_gives_constant_transmission(self):
        t = gen_transmission(5, 16, 16, 1.0, 1.0)
        self.assertAlmostEqual(float(t.data.max() - t.data.min()), 0.0, places=12)

    def test_small_beta_approaches_identity(self):
        t = gen_transmission(5, 16, 16, 1e-9, 0.2)
        self.assertGreater(float(t.data.min()), 1.0 - 1e-8)

    def test_rain_layers_have_own_streams(self):
        geometry = StreakGeometry(angle=10.0)
        two = gen_rain_streaks(3, 32, 32, 2, geometry, 0.7)
        three = gen_rain_streaks(3, 32, 32, 3, geometry, 0.7)
        self.assertEqual(two[0], three[0], "Layer 0 must not depend on the layer count")
        self.assertEqual(two[1], three[1])
        self.assertNotEqual(three[0], three[1])

    def test_rain_peak_is_the_intensity(self):
        layers = gen_rain_streaks(3, 64, 64, 1, StreakGeometry(length=20.0, width=2.0), 0.6)
        self.assertAlmostEqual(float(layers[0].data.max()), 0.6)
        self.assertGreaterEqual(float(layers[0].data.min()), 0.0)

    def test_degenerate_streaks_rejected(self):
        with self.assertRaises(ParameterError):
            gen_rain_streaks(3, 16, 16, 1, StreakGeometry(length=0.5), 0.5)

    def test_particle_count_matches_coverage_model(self):
        n = particle_count(100, 100, 0.05, (2.0, 2.0))
        self.assertEqual(n, round(-math.log(0.95) * 10000 / (math.pi * 4.0)))

    def test_snow_field(self):
        mask, flakes = gen_particle_field(9, 48, 48, 0.05, (1.0, 3.0), "snow")
        self.assertEqual(mask.channels, 1)
        self.assertGreater(float(mask.data.max()), 0.0)
        self.assertLessEqual(float(mask.data.max()), 1.0)
        covered = mask.data > 0
        self.assertGreaterEqual(float(flakes.data[covered].min()), 0.85)
        self.assertTrue(np.all(flakes.data[~covered] == 0.0))

    def test_coverage_tracks_density(self):
        clean = ImageBuffer(generator(0, "clean").random((256, 256, 3)))
        for kind in (DegradationKind.SNOW, DegradationKind.RAINDROP):
            coverage = [float(gen_particle_field(seed, 256, 256, 0.1, (1.5, 4.0), kind, clean)[0].data.mean())
                        for seed in range(10)]
            self.assertTrue(0.08 <= float(np.mean(coverage)) <= 0.12, f"{kind.value}: {coverage}")
            self.assertTrue(all(0.07 <= c <= 0.13 for c in coverage), f"{kind.value}: {coverage}")

    def test_raindrop_residual_is_masked(self):
        clean = ImageBuffer(generator(4, "clean").random((32, 32, 3)))
        mask, residual = gen_particle_field(9, 32, 32, 0.1, (3.0, 6.0), "raindrop", clean)
        self.assertEqual(residual.channels, 3)
        self.assertTrue(np.all(residual.data[mask.data[:, :, 0] == 0.0] == 0.0))
        self.assertTrue(np.all(residual.data <= mask.data + 1e-12))

    def test_raindrop_needs_clean_image(self):
        with self.assertRaises(ParameterError):
            gen_particle_field(9, 32, 32, 0.1, (3.0, 6.0), "raindrop")

    def test_particles_only_for_snow_and_raindrop(self):
        with self.assertRaises(ParameterError):
            gen_particle_field(9, 32, 32, 0.1, (3.0, 6.0), "fog")

    def test_empty_radius_range_rejected(self):
        with self.assertRaises(ParameterError):
            gen_particle_field(9, 32, 32, 0.1, (6.0, 3.0), "snow")


class TestWeatherParams(unittest.TestCase):
    def test_kind_vocabulary(self):
        self.assertEqual([k.value for k in DegradationKind], ["raindrop", "rain", "snow", "fog", "haze"])
        self.assertIs(DegradationKind.parse("fog"), DegradationKind.FOG)
        with self.assertRaises(ParameterError):
            DegradationKind.parse("sandstorm")

    def test_per_kind_defaults(self):
        self.assertEqual(WeatherParams.for_kind("fog").haze_uniformity, 0.2)
        self.assertEqual(WeatherParams.for_kind("haze").haze_uniformity, 0.9)
        self.assertEqual(WeatherParams.for_kind("rain").beta, 0.3)
        self.assertEqual(WeatherParams.for_kind("snow", beta=2.0).beta, 2.0, "Overrides win over defaults")

    def test_record_round_trip(self):
        params = WeatherParams.for_kind("rain", seed=77, geometry=StreakGeometry(angle=-12.5),
                                        atmospheric_light=(0.7, 0.75, 0.8))
        self.assertEqual(WeatherParams.from_record(params.to_record()), params)

    def test_invalid_fields_rejected(self):
        with self.assertRaises(ParameterError):
            WeatherParams(beta=0.0)
        with self.assertRaises(ParameterError):
            WeatherParams(atmospheric_light=(0.5, 0.5))

    def test_sampling_ranges(self):
        for i in range(20):
            fog = sample_weather_params("fog", generator(i, "params"), i)
            self.assertTrue(0.5 <= fog.beta <= 2.0)
            self.assertTrue(0.7 <= fog.atmospheric_light <= 0.9)
            rain = sample_weather_params("rain", generator(i, "params"), i)
            self.assertTrue(-20.0 <= rain.geometry.angle <= 20.0)
            self.assertTrue(0.4 <= rain.intensity <= 0.9)
            snow = sample_weather_params("snow", generator(i, "params"), i)
            self.assertTrue(0.02 <= snow.density <= 0.08)

    def test_sampling_is_deterministic(self):
        a = sample_weather_params("haze", generator(3, "params"), 3)
        b = sample_weather_params("haze", generator(3, "params"), 3)
        self.assertEqual(a, b)


class TestSynthesizeWeather(unittest.TestCase):
    def test_every_kind_is_deterministic_and_in_range(self):
        clean = ImageBuffer(0.2 + 0.6 * generator(8, "clean").random((32, 32, 3)))
        for kind in DegradationKind:
            params = WeatherParams.for_kind(kind, seed=11)
            first, record = synthesize_weather(clean, kind, params)
            second, _ = synthesize_weather(clean, kind, params)
            self.assertEqual(first, second, f"{kind.value} must be deterministic")
            self.assertEqual(record["kind"], kind.value)
            self.assertGreaterEqual(float(first.data.min()), 0.0)
            self.assertLessEqual(float(first.data.max()), 1.0)
            self.assertNotEqual(first, clean, f"{kind.value} must change the image")

    def test_record_rebuilds_the_same_image(self):
        clean = ImageBuffer(generator(8, "clean").random((24, 24, 3)))
        out, record = synthesize_weather(clean, "snow", WeatherParams.for_kind("snow", seed=5))
        again, _ = synthesize_weather(clean, record["kind"], WeatherParams.from_record(record))
        self.assertEqual(out, again)

    def test_grayscale_input(self):
        clean = ImageBuffer(np.full((16, 16), 0.5))
        out, _ = synthesize_weather(clean, "fog", WeatherParams.for_kind("fog", seed=1))
        self.assertEqual(out.channels, 1)


if __name__ == "__main__":
    unittest.main()
