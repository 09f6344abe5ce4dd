import tempfile
import unittest
from pathlib import Path

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal
from PIL import Image

from night_restore.errors import (
    CorruptImageError,
    ImageNotFoundError,
    ImageWriteError,
    ParameterError,
    ShapeMismatchError,
    UnsupportedImageError,
)
from night_restore.imagecore import (
    IlluminationMap,
    ImageBuffer,
    broadcast_pair,
    hadamard,
    load_image,
    quantize,
    save_image,
)


class TestImageBuffer(unittest.TestCase):
    def test_two_dimensional_input_gains_channel_axis(self):
        buf = ImageBuffer(np.zeros((4, 5)))
        self.assertEqual(buf.shape, (4, 5, 1))
        self.assertEqual((buf.height, buf.width, buf.channels), (4, 5, 1))

    def test_data_is_a_read_only_copy(self):
        source = np.zeros((2, 2, 3))
        buf = ImageBuffer(source)
        source[0, 0, 0] = 1.0
        self.assertEqual(buf.data[0, 0, 0], 0.0, "The buffer must not alias its input")
        with self.assertRaises(ValueError):
            buf.data[0, 0, 0] = 1.0

    def test_rejects_bad_channel_count(self):
        with self.assertRaises(ParameterError) as ctx:
            ImageBuffer(np.zeros((2, 2, 2)))
        self.assertEqual(str(ctx.exception), "ImageBuffer: Raster channels must be one of [1, 3], got 2")

    def test_rejects_non_finite_samples(self):
        with self.assertRaises(ParameterError):
            ImageBuffer(np.array([[np.nan]]))

    def test_values_may_leave_unit_interval(self):
        buf = ImageBuffer(np.array([[-0.5, 1.5]]))
        assert_array_equal(buf.clamp01().data[:, :, 0], [[0.0, 1.0]])

    def test_equality_is_by_content_and_class(self):
        a = ImageBuffer(np.full((2, 2), 0.5))
        self.assertEqual(a, ImageBuffer.constant(2, 2, 1, 0.5))
        self.assertNotEqual(a, IlluminationMap(np.full((2, 2), 0.5)))

    def test_crop_keeps_class(self):
        illum = IlluminationMap(np.full((6, 6), 0.5))
        crop = illum.crop(1, 2, 3, 4)
        self.assertIsInstance(crop, IlluminationMap)
        self.assertEqual(crop.shape, (3, 4, 1))

    def test_luma_weights(self):
        buf = ImageBuffer(np.ones((1, 1, 3)) * np.array([1.0, 0.0, 0.0]))
        self.assertAlmostEqual(float(buf.luma()[0, 0]), 0.299)


class TestIlluminationMap(unittest.TestCase):
    def test_floor_is_enforced(self):
        with self.assertRaises(ParameterError):
            IlluminationMap(np.zeros((2, 2)))
        IlluminationMap(np.full((2, 2), 1e-3))

    def test_single_channel_only(self):
        with self.assertRaises(ParameterError):
            IlluminationMap(np.full((2, 2, 3), 0.5))


class TestElementwise(unittest.TestCase):
    def test_single_channel_broadcasts_over_rgb(self):
        rgb = ImageBuffer(np.full((2, 2, 3), 0.5))
        mask = ImageBuffer(np.full((2, 2), 0.5))
        assert_allclose(hadamard(rgb, mask).data, np.full((2, 2, 3), 0.25))

    def test_size_mismatch_raises(self):
        with self.assertRaises(ShapeMismatchError):
            broadcast_pair(ImageBuffer(np.zeros((2, 2))), ImageBuffer(np.zeros((3, 2))))

    def test_hadamard_is_commutative_and_associative(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            a = ImageBuffer(rng.random((5, 7, 3)))
            b = ImageBuffer(rng.random((5, 7, 3)))
            c = ImageBuffer(rng.random((5, 7)))
            assert_array_equal(hadamard(a, b).data, hadamard(b, a).data)
            assert_array_equal(hadamard(a, c).data, hadamard(c, a).data)
            assert_allclose(hadamard(hadamard(a, b), c).data, hadamard(a, hadamard(b, c)).data,
                            rtol=1e-12, atol=0.0)


class TestPngIO(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def test_rgb_round_trip_is_exact_on_the_8_bit_grid(self):
        raw = np.arange(48, dtype=np.uint8).reshape(4, 4, 3) * 5
        buf = ImageBuffer(raw / 255.0)
        save_image(buf, self.dir / "a.png")
        assert_array_equal(quantize(load_image(self.dir / "a.png")), raw)

    def test_round_trip_error_is_at_most_half_a_level(self):
        rng = np.random.default_rng(5)
        for channels in (1, 3):
            buf = ImageBuffer(rng.random((16, 16, channels)))
            save_image(buf, self.dir / f"r{channels}.png")
            back = load_image(self.dir / f"r{channels}.png")
            self.assertEqual(back.shape, buf.shape)
            self.assertLessEqual(float(np.abs(back.data - buf.data).max()), 1.0 / 510.0 + 1e-12)

    def test_grayscale_round_trip(self):
        buf = ImageBuffer(np.linspace(0.0, 1.0, 16).reshape(4, 4))
        save_image(buf, self.dir / "g.png")
        back = load_image(self.dir / "g.png")
        self.assertEqual(back.shape, (4, 4, 1))
        assert_array_equal(quantize(back), quantize(buf))

    def test_quantize_clamps_and_rounds_half_up(self):
        buf = ImageBuffer(np.array([[-1.0, 0.4 / 255.0, 0.6 / 255.0, 2.0]]))
        assert_array_equal(quantize(buf)[:, :, 0], [[0, 0, 1, 255]])

    def test_missing_file(self):
        with self.assertRaises(ImageNotFoundError):
            load_image(self.dir / "missing.png")

    def test_rgba_is_unsupported(self):
        Image.new("RGBA", (2, 2)).save(self.dir / "rgba.png")
        with self.assertRaises(UnsupportedImageError):
            load_image(self.dir / "rgba.png")

    def test_sixteen_bit_is_unsupported(self):
        Image.fromarray(np.zeros((2, 2), dtype=np.uint16)).save(self.dir / "deep.png")
        with self.assertRaises(UnsupportedImageError):
            load_image(self.dir / "deep.png")

    def test_other_formats_are_unsupported(self):
        Image.new("RGB", (2, 2)).save(self.dir / "x.bmp", format="BMP")
        with self.assertRaises(UnsupportedImageError):
            load_image(self.dir / "x.bmp")

    def test_garbage_is_corrupt(self):
        (self.dir / "junk.png").write_bytes(b"definitely not a png")
        with self.assertRaises(CorruptImageError):
            load_image(self.dir / "junk.png")

    def test_unwritable_destination(self):
        with self.assertRaises(ImageWriteError):
            save_image(ImageBuffer(np.zeros((2, 2))), self.dir / "no" / "such" / "dir" / "x.png")


if __name__ == "__main__":
    unittest.main()
