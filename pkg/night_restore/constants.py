"""Library-wide defaults.

Every tunable has exactly one home here; call sites import the constant rather
than repeating the literal.
"""

DEFAULT_SUCCESS_MESSAGE = "validation successful"

# diffusion
DIFFUSION_STEPS = 1000
BETA_START = 1e-4
BETA_END = 0.02
SAMPLING_STEPS = 40

# tiling
PATCH_SIZE = 64
GRID_STEP = 16

# illumination
ILLUMINATION_FLOOR = 1e-3
REFINE_STAGES = 3
REFINE_RATE = 0.5
BLUR_WINDOW = 15

# darkening
EXPOSURE_RANGE = (0.05, 0.3)
CURVE_ITERATIONS = 10
EXPOSURE_ANCHOR = 0.5
DEFAULT_VARIATION = 0.1

# weather
ATMOSPHERIC_LIGHT = 0.8

# metrics
PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

# persisted formats
MANIFEST_VERSION = "1"
MODEL_MAGIC = b"IGDN"
MODEL_FORMAT_VERSION = 1
