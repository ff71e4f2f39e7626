"""Pipeline configuration: one flat key/value namespace.

Every knob of every stage lives here so a run can be reproduced from
its manifest alone.  Files use ``key: value`` lines; unknown keys are
rejected rather than ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .airlight import AirlightParams
from .colorline import ClassifierParams
from .darkchannel import DcpParams
from .errors import ConfigError
from .recover import MODE_AIRLIGHT, MODE_TRANSMISSION, RecoveryParams

_DENOISE_MODES = ("none", "median3")


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class PipelineConfig:
    # dark channel
    dcp_patch_size: int = 15
    airlight_floor: float = 1.0 / 255.0
    # anchors
    anchor_window: int = 7
    anchor_top_fraction: float = 0.25
    # feature spaces
    feature_spatial_weight: float = 0.1
    nn_spatial_weight: float = 0.1
    # color lines
    colorline_patch: int = 7
    max_patch_growth: int = 15
    inlier_sigma: float = 0.02
    min_inlier_fraction: float = 0.4
    inlier_prior: float = 0.5
    hypotheses: int = 64
    use_spatial_features: bool = False
    # airlight validation and refinement
    min_intersection_angle_deg: float = 15.0
    max_intersection_residual: float = 0.05
    magnitude_max: float = 1.0
    min_shading_spread: float = 0.02
    weight_normals_by_support: bool = True
    refine_iters: int = 5
    # interpolation
    alpha: float = 1.0
    beta: float = 0.1
    edge_epsilon: float = 1e-4
    solver_tol: float = 1e-6
    solver_max_iter: int = 0  # 0 means 10 * sqrt(n)
    # recovery
    t_floor: float = 0.1
    gamma: float = 1.5
    mode: str = MODE_AIRLIGHT
    raw_transmission: bool = False
    # preprocessing and execution
    denoise: str = "none"
    threads: int = 1
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        try:
            self.dcp_params()
            self.classifier_params()
            self.airlight_params()
            self.recovery_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.anchor_window < 3 or self.anchor_window % 2 == 0:
            raise ConfigError("anchor_window must be odd and >= 3")
        if not 0.0 < self.anchor_top_fraction <= 1.0:
            raise ConfigError("anchor_top_fraction must lie in (0, 1]")
        if self.nn_spatial_weight < 0.0:
            raise ConfigError("nn_spatial_weight must be non-negative")
        if self.colorline_patch < 3 or self.colorline_patch % 2 == 0:
            raise ConfigError("colorline_patch must be odd and >= 3")
        if self.alpha < 0.0 or self.beta < 0.0:
            raise ConfigError("alpha and beta must be non-negative")
        if self.edge_epsilon <= 0.0:
            raise ConfigError("edge_epsilon must be positive")
        if self.solver_tol <= 0.0:
            raise ConfigError("solver_tol must be positive")
        if self.solver_max_iter < 0:
            raise ConfigError("solver_max_iter must be non-negative")
        if self.denoise not in _DENOISE_MODES:
            raise ConfigError(f"denoise must be one of {', '.join(_DENOISE_MODES)}")
        if self.threads < 1:
            raise ConfigError("threads must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    def dcp_params(self) -> DcpParams:
        return DcpParams(self.dcp_patch_size, self.airlight_floor)

    def classifier_params(self) -> ClassifierParams:
        return ClassifierParams(
            inlier_sigma=self.inlier_sigma,
            min_inlier_fraction=self.min_inlier_fraction,
            max_patch_growth=self.max_patch_growth,
            inlier_prior=self.inlier_prior,
            hypotheses=self.hypotheses,
            use_spatial_features=self.use_spatial_features,
            feature_spatial_weight=self.feature_spatial_weight,
        )

    def airlight_params(self) -> AirlightParams:
        return AirlightParams(
            min_angle_deg=self.min_intersection_angle_deg,
            max_residual=self.max_intersection_residual,
            magnitude_max=self.magnitude_max,
            min_shading_spread=self.min_shading_spread,
            weight_by_support=self.weight_normals_by_support,
            refine_iters=self.refine_iters,
        )

    def recovery_params(self) -> RecoveryParams:
        return RecoveryParams(self.t_floor, self.gamma, self.mode)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, values: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**cls._coerce(dict(values)))

    @staticmethod
    def _coerce(raw: dict) -> dict:
        defaults = {f.name: f.default for f in fields(PipelineConfig)}
        out = {}
        for key, value in raw.items():
            default = defaults[key]
            if isinstance(value, str):
                try:
                    if isinstance(default, bool):
                        out[key] = _parse_bool(value)
                    elif isinstance(default, int):
                        out[key] = int(value)
                    elif isinstance(default, float):
                        out[key] = float(value)
                    else:
                        out[key] = value.strip()
                except ValueError as exc:
                    raise ConfigError(f"bad value for {key}: {exc}") from exc
            else:
                out[key] = value
        return out

    def override(self, **changes) -> "PipelineConfig":
        values = self.as_dict()
        for key, value in changes.items():
            if value is None:
                continue
            if key not in values:
                raise ConfigError(f"unknown config key: {key}")
            values[key] = value
        return PipelineConfig.from_dict(values)


def mode_from_cli(value: str) -> str:
    if value in (MODE_TRANSMISSION, MODE_AIRLIGHT):
        return value
    raise ConfigError(f"mode must be '{MODE_TRANSMISSION}' or '{MODE_AIRLIGHT}'")
