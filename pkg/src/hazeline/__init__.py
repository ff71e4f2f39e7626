"""Single image dehazing through patch color lines and an airlight field."""

from .config import PipelineConfig
from .errors import ConfigError, NumericError
from .metrics import compare, mse, psnr, ssim, wsnr
from .pipeline import DehazeResult, dehaze_image, run_dehaze
from .synthesize import SceneSpec, scene_from_spec, synthesize_haze

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DehazeResult",
    "NumericError",
    "PipelineConfig",
    "SceneSpec",
    "compare",
    "dehaze_image",
    "mse",
    "psnr",
    "run_dehaze",
    "scene_from_spec",
    "ssim",
    "synthesize_haze",
    "wsnr",
    "__version__",
]
