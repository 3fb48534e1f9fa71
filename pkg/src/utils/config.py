"""Configuration management for the toolkit."""

import os
import json
from dataclasses import dataclass, field, fields, asdict
from pathlib import Path
from typing import Dict, Any, List, Optional

from dotenv import load_dotenv

from src.core.errors import DataFormatError, DomainError
from src.utils.logging import get_logger

logger = get_logger()


@dataclass(frozen=True)
class ExperimentConfig:
    """Published constants of the pulsed photon-subtraction experiment.

    Every default equals the value quoted for the experiment, so a run with
    no overrides regenerates the prediction tables.
    """
    pump_powers_mw: List[float] = field(default_factory=lambda: [2.0, 4.0, 6.0, 8.0])
    gain_c: float = 0.28
    epsilon: float = 0.77
    tap_R: float = 0.077
    eta_hd: float = 0.77
    eta_alt: float = 0.62
    eta_bs: float = 0.92
    xi: float = 1.0
    xi_per_power: Dict[str, float] = field(
        default_factory=lambda: {"2.0": 0.72, "4.0": 0.86, "6.0": 0.91, "8.0": 0.96})
    alt_view: str = "alt_input"
    n_segments: int = 4000
    n_segments_squeezing: int = 65200
    phase_span: float = 3 * 3.141592653589793
    bin_size: int = 100
    n_max: int = 15
    prediction_n_max: int = 30
    dark_rate_hz: float = 2.0
    trigger_rate_hz_per_power: Dict[str, float] = field(
        default_factory=lambda: {"2.0": 400.0, "4.0": 860.0, "6.0": 1860.0, "8.0": 4000.0})
    seed: int = 20240101

    def __post_init__(self):
        if self.gain_c <= 0:
            raise DomainError("gain_c must be positive", operation="ExperimentConfig")
        for name in ("epsilon", "eta_hd", "eta_alt", "eta_bs", "xi"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {value}",
                                  operation="ExperimentConfig")
        if not 0.0 < self.tap_R < 1.0:
            raise DomainError("tap_R must lie in (0, 1)", operation="ExperimentConfig")
        if self.dark_rate_hz < 0 or any(v <= 0 for v in self.trigger_rate_hz_per_power.values()):
            raise DomainError("dark rate must be nonnegative and trigger rates positive",
                              operation="ExperimentConfig")
        if self.n_segments < self.bin_size:
            raise DomainError("n_segments must be at least bin_size",
                              operation="ExperimentConfig")

    def xi_for(self, power_mw: float) -> float:
        """Modal purity for a pump power, falling back to the global value."""
        return float(self.xi_per_power.get(f"{float(power_mw):.1f}", self.xi))

    def trigger_rate_for(self, power_mw: float) -> Optional[float]:
        """Herald click rate for a pump power; None when it was not recorded."""
        rate = self.trigger_rate_hz_per_power.get(f"{float(power_mw):.1f}")
        return None if rate is None else float(rate)

    @property
    def fit_start(self) -> Dict[str, float]:
        """Calibration fit starting values taken from the published constants."""
        return {'c': self.gain_c, 'epsilon': self.epsilon, 'eta': self.eta_alt}

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise DataFormatError(f"Unknown configuration keys: {', '.join(unknown)}",
                                  operation="load_experiment_config")
        return cls(**data)


def load_experiment_config(path: Optional[str] = None, **overrides) -> ExperimentConfig:
    """Build an ExperimentConfig from an optional JSON file plus overrides."""
    data: Dict[str, Any] = {}
    if path:
        config_path = Path(path)
        logger.info(f"Loading experiment configuration from {config_path}")
        try:
            with open(config_path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise DataFormatError(f"Invalid JSON in {config_path}: {e}",
                                  operation="load_experiment_config")
        if not isinstance(data, dict):
            raise DataFormatError(f"{config_path} must contain a JSON object",
                                  operation="load_experiment_config")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(data)


class Config:
    """Runtime settings management."""

    _instance = None

    @classmethod
    def get_instance(cls):
        """Get or create the singleton config instance."""
        if cls._instance is None:
            cls._instance = Config()
        return cls._instance

    def __init__(self):
        """Initialize the configuration manager."""
        self.config_dir = Path.home() / '.catsim'
        self.config_file = self.config_dir / 'config.json'

        self.defaults = {
            'max_concurrent_operations': 4,
            'log_level': 'INFO',
            'default_out_dir': 'out',
            'wigner_extent': 6.0,
            'wigner_step': 0.05,
        }

        self.config_dir.mkdir(parents=True, exist_ok=True)
        load_dotenv()

        self.config = self._load_config()
        self._apply_environment()

    def _load_config(self) -> Dict[str, Any]:
        """Load configuration from file or create default if not exists."""
        try:
            if not self.config_file.exists():
                logger.info(f"Creating default configuration at {self.config_file}")
                with open(self.config_file, 'w') as f:
                    json.dump(self.defaults, f, indent=2)
                return self.defaults.copy()

            logger.debug(f"Loading configuration from {self.config_file}")
            with open(self.config_file, 'r') as f:
                config = json.load(f)

            # Ensure all default keys exist
            for key, value in self.defaults.items():
                if key not in config:
                    config[key] = value

            return config
        except Exception as e:
            logger.error(f"Error loading configuration: {e}")
            return self.defaults.copy()

    def _apply_environment(self) -> None:
        """Override settings from CATSIM_<KEY> environment variables."""
        for key, default in self.defaults.items():
            raw = os.environ.get(f"CATSIM_{key.upper()}")
            if raw is None:
                continue
            try:
                self.config[key] = type(default)(raw)
                logger.debug(f"Setting {key} overridden from environment")
            except ValueError:
                logger.warning(f"Ignoring CATSIM_{key.upper()}={raw!r}: not a {type(default).__name__}")

    def save_config(self) -> bool:
        """Save current configuration to file."""
        try:
            logger.info(f"Saving configuration to {self.config_file}")
            with open(self.config_file, 'w') as f:
                json.dump(self.config, f, indent=2)
            return True
        except Exception as e:
            logger.error(f"Error saving configuration: {e}")
            return False

    def get(self, key: str, default: Any = None) -> Any:
        """Get a configuration value."""
        return self.config.get(key, default)

    def set(self, key: str, value: Any) -> None:
        """Set a configuration value and save."""
        self.config[key] = value
        self.save_config()


def get_config() -> Config:
    """Get the configuration instance."""
    return Config.get_instance()
