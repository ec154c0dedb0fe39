"""Configuration management with YAML/TOML files + environment overrides."""

import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from splatfusion.errors import ConfigError

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


@dataclass
class TrackingConfig:
    """Sliding-window factor graph and DSPO configuration."""

    kf_flow_threshold: float = 2.0  # tau, pixels
    consistency_threshold: int = 2  # tau_consistency, neighbour count
    alpha1: float = 0.05  # high-error depth -> aligned prior
    alpha2: float = 1.0  # low-error depth -> (scale, shift)
    window_size: int = 5
    gn_iters: int = 8
    dspo_rounds: int = 3
    damping: float = 1e-4
    max_damping: float = 1e6
    convergence_tol: float = 1e-12

    def validate(self) -> None:
        """Raise ConfigError if an invariant is violated."""
        if not self.alpha2 > self.alpha1 > 0:
            raise ConfigError(
                f"tracking: require alpha2 > alpha1 > 0 (got {self.alpha1}, {self.alpha2})"
            )
        if self.window_size < 2:
            raise ConfigError(f"tracking: window_size must be >= 2 (got {self.window_size})")
        if self.kf_flow_threshold < 0:
            raise ConfigError("tracking: kf_flow_threshold must be non-negative")
        if self.gn_iters < 1 or self.dspo_rounds < 0:
            raise ConfigError("tracking: gn_iters >= 1 and dspo_rounds >= 0 required")
        if not 0 < self.damping <= self.max_damping:
            raise ConfigError("tracking: require 0 < damping <= max_damping")


@dataclass
class FusionConfig:
    """Multi-view consistency and proxy-depth fusion configuration."""

    eta: float = 0.01  # consistency tolerance factor
    n_key: int = 30  # normalization count
    interpolation: str = "bilinear"  # bilinear or nearest

    def validate(self) -> None:
        """Raise ConfigError if an invariant is violated."""
        if self.eta <= 0:
            raise ConfigError(f"fusion: eta must be > 0 (got {self.eta})")
        if self.n_key < 1:
            raise ConfigError(f"fusion: n_key must be >= 1 (got {self.n_key})")
        if self.interpolation not in ("bilinear", "nearest"):
            raise ConfigError(f"fusion: unknown interpolation '{self.interpolation}'")


@dataclass
class MapLossConfig:
    """Composite map loss weights."""

    lambda_ssim: float = 0.2
    lambda_depth: float = 0.2
    lambda_reg: float = 10.0
    ssim_window: int = 11
    ssim_sigma: float = 1.5

    def validate(self) -> None:
        """Raise ConfigError if an invariant is violated."""
        if min(self.lambda_ssim, self.lambda_depth, self.lambda_reg) < 0:
            raise ConfigError("map_loss: all lambda weights must be >= 0")
        if self.lambda_ssim > 1:
            raise ConfigError("map_loss: lambda_ssim must lie in [0, 1]")
        if self.ssim_window < 1 or self.ssim_window % 2 == 0:
            raise ConfigError("map_loss: ssim_window must be a positive odd integer")


@dataclass
class MapOptimizerConfig:
    """Gaussian map initialization and Adam step sizes per parameter group."""

    init_stride: int = 4
    lr_means: float = 5e-3
    lr_log_scales: float = 5e-3
    lr_rotations: float = 1e-3
    lr_opacity: float = 5e-2
    lr_colors: float = 1e-2
    lr_final_fraction: float = 0.1  # exponential decay to this fraction of each lr
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-10
    iters_per_keyframe: int = 15
    final_iters: int = 60

    def validate(self) -> None:
        """Raise ConfigError if an invariant is violated."""
        if self.init_stride < 1:
            raise ConfigError("map_optimizer: init_stride must be >= 1")
        rates = (
            self.lr_means,
            self.lr_log_scales,
            self.lr_rotations,
            self.lr_opacity,
            self.lr_colors,
        )
        if min(rates) < 0:
            raise ConfigError("map_optimizer: learning rates must be >= 0")
        if not 0 < self.lr_final_fraction <= 1:
            raise ConfigError("map_optimizer: lr_final_fraction must lie in (0, 1]")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("map_optimizer: betas must lie in [0, 1)")


@dataclass
class LoopClosureConfig:
    """Loop-closure candidate gating."""

    covis_overlap_min: float = 0.5
    min_temporal_gap: int = 5
    max_candidates_per_kf: int = 3
    sample_stride: int = 2  # pixel stride of the overlap probe

    def validate(self) -> None:
        """Raise ConfigError if an invariant is violated."""
        if not 0 < self.covis_overlap_min <= 1:
            raise ConfigError("loop_closure: covis_overlap_min must lie in (0, 1]")
        if self.min_temporal_gap < 1:
            raise ConfigError("loop_closure: min_temporal_gap must be >= 1")
        if self.max_candidates_per_kf < 1 or self.sample_stride < 1:
            raise ConfigError("loop_closure: counts must be >= 1")


@dataclass
class PipelineConfig:
    """End-to-end run configuration."""

    scene: str = "smoke"
    seed: int = 0
    output_dir: str = "runs/latest"
    ba_every: int = 10
    local_ba_radius: int = 2
    neighbors_per_keyframe: int = 3
    sequential: bool = False
    fusion_enabled: bool = True
    loop_closure_enabled: bool = True
    consistency_jobs: int = 1
    ate_alignment: str = "rigid"  # rigid, sim3 or none
    write_artifacts: bool = True

    def validate(self) -> None:
        """Raise ConfigError if an invariant is violated."""
        if self.ba_every < 1:
            raise ConfigError("pipeline: ba_every must be >= 1")
        if self.neighbors_per_keyframe < 1:
            raise ConfigError("pipeline: neighbors_per_keyframe must be >= 1")
        if self.ate_alignment not in ("rigid", "sim3", "none"):
            raise ConfigError(f"pipeline: unknown ate_alignment '{self.ate_alignment}'")
        if self.consistency_jobs == 0:
            raise ConfigError("pipeline: consistency_jobs must be non-zero")


@dataclass
class LoggingConfig:
    """Logging configuration."""

    level: str = "INFO"
    console_level: str = "INFO"  # console never shows records below this
    file_path: Optional[str] = None
    max_bytes: int = 10 * 1024 * 1024  # 10MB
    backup_count: int = 5

    def validate(self) -> None:
        """Raise ConfigError if an invariant is violated."""
        for name in (self.level, self.console_level):
            if name.upper() not in LOG_LEVELS:
                raise ConfigError(f"logging: unknown level '{name}' (use {LOG_LEVELS})")
        if self.max_bytes < 0 or self.backup_count < 0:
            raise ConfigError("logging: max_bytes and backup_count must be >= 0")


@dataclass
class Config:
    """Master configuration."""

    tracking: TrackingConfig = field(default_factory=TrackingConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    map_loss: MapLossConfig = field(default_factory=MapLossConfig)
    map_optimizer: MapOptimizerConfig = field(default_factory=MapOptimizerConfig)
    loop_closure: LoopClosureConfig = field(default_factory=LoopClosureConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)

    @classmethod
    def load(cls, path: Optional[Path] = None) -> "Config":
        """
        Load configuration from a YAML or TOML file with environment overrides.

        Args:
            path: Path to config file (.yaml, .yml or .toml). If None, uses defaults.

        Returns:
            Validated Config instance with merged values.
        """
        config_dict: Dict[str, Any] = {}

        if path and path.exists():
            config_dict = _read_config_file(path)
        elif path:
            raise ConfigError(f"Config file not found: {path}")

        # Environment overrides
        env_mapping = {
            "SPLATFUSION_LOG_LEVEL": ("logging", "level"),
            "SPLATFUSION_SEED": ("pipeline", "seed"),
            "SPLATFUSION_OUTPUT_DIR": ("pipeline", "output_dir"),
            "SPLATFUSION_SCENE": ("pipeline", "scene"),
        }

        for env_key, path_tuple in env_mapping.items():
            if env_val := os.getenv(env_key):
                current = config_dict
                for key in path_tuple[:-1]:
                    current = current.setdefault(key, {})
                current[path_tuple[-1]] = _parse_env_value(env_val)

        unknown = set(config_dict) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown config sections: {sorted(unknown)}")

        config = cls(
            tracking=_build_nested(TrackingConfig, config_dict.get("tracking", {})),
            fusion=_build_nested(FusionConfig, config_dict.get("fusion", {})),
            map_loss=_build_nested(MapLossConfig, config_dict.get("map_loss", {})),
            map_optimizer=_build_nested(
                MapOptimizerConfig, config_dict.get("map_optimizer", {})
            ),
            loop_closure=_build_nested(
                LoopClosureConfig, config_dict.get("loop_closure", {})
            ),
            pipeline=_build_nested(PipelineConfig, config_dict.get("pipeline", {})),
            logging=_build_nested(LoggingConfig, config_dict.get("logging", {})),
        )
        config.validate()
        return config

    def validate(self) -> None:
        """Validate every section."""
        self.tracking.validate()
        self.fusion.validate()
        self.map_loss.validate()
        self.map_optimizer.validate()
        self.loop_closure.validate()
        self.pipeline.validate()
        self.logging.validate()

    def to_dict(self) -> Dict[str, Any]:
        """Nested plain-dict view (one table per section)."""
        return asdict(self)

    def save(self, path: Path) -> None:
        """Save configuration to YAML file."""
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            yaml.safe_dump(self.to_dict(), f, default_flow_style=False, sort_keys=False)


def _read_config_file(path: Path) -> Dict[str, Any]:
    """Parse a YAML or TOML document into a dict."""
    suffix = path.suffix.lower()
    try:
        if suffix == ".toml":
            with open(path, "rb") as fb:
                return tomllib.load(fb)
        if suffix in (".yaml", ".yml"):
            with open(path, "r") as f:
                return yaml.safe_load(f) or {}
    except (yaml.YAMLError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"Could not parse {path}: {e}") from e
    raise ConfigError(f"Unsupported config format '{suffix}' (use .yaml, .yml or .toml)")


def _build_nested(cls: type, data: Dict[str, Any]) -> Any:
    """Build dataclass instance from dict, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(f"Section for {cls.__name__} must be a table")
    unknown = set(data) - set(cls.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"Unknown keys for {cls.__name__}: {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(str(e)) from e


def _parse_env_value(value: str) -> Any:
    """Parse environment variable value to appropriate type."""
    if value.lower() in ("true", "yes"):
        return True
    if value.lower() in ("false", "no"):
        return False
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        pass
    return value
