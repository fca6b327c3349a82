#!/usr/bin/env python3
"""
config.py - Run configuration

Flat JSON configuration with defaults, validation and dot-free key access.
Every experiment mode reads its parameters from a RunConfig built here.
"""

import json
import os
from dataclasses import dataclass, fields, asdict
from typing import Dict, Any, List, Optional

from utils.errors import ConfigError


MODES = ("simulate", "euler", "compare", "kappa", "oracle", "verify")

# Modes whose initial datum must satisfy the nonpositive sign condition
SIGN_CONSTRAINED_MODES = ("simulate", "euler", "compare", "kappa", "verify")


class ConfigManager:
    """Flat JSON configuration management with defaults and validation"""

    DEFAULT_CONFIG_FILE = "vortexlab.json"

    def __init__(self, config_file: Optional[str] = None):
        self.config_file = config_file
        self.default_config = self._get_default_config()
        self.config: Dict[str, Any] = dict(self.default_config)
        if config_file is not None:
            self.config = self.load_config(config_file)

    @staticmethod
    def _get_default_config() -> Dict[str, Any]:
        """Get default configuration values"""
        return {
            "mode": None,
            # Meridian grid (IVSE runs)
            "n_r": 128,
            "n_z": 128,
            "r_min": 1.0,
            "r_max": 3.0,
            "z_min": 0.25,
            "z_max": 2.0,
            # Ring-pair initial datum
            "center_r": 2.0,
            "center_z": 1.0,
            "radius_r": 0.5,
            "radius_z": 0.5,
            "amplitude": -1.0,
            "initial_snapshot": None,
            # Kernel quadrature
            "rule_order": AppConstants.DEFAULT_RULE_ORDER,
            "rule_levels": 0,
            "delta": None,   # None = half a cell diagonal
            # IVSE stepping
            "stepper": "exponential",
            "cfl_factor": AppConstants.DEFAULT_CFL,
            "lower_curve_tol": AppConstants.DEFAULT_LOWER_CURVE_TOL,
            "kappa_safety": AppConstants.DEFAULT_KAPPA_SAFETY,
            "kappa_schedule": [8, 4, 2, 1],
            "ivse_threshold": AppConstants.IVSE_SUPPORT_THRESHOLD,
            "sup_norm_cap": AppConstants.DEFAULT_SUP_NORM_CAP,
            "t_max": 50.0,
            "max_steps": 20000,
            "snapshot_every": 0,
            "csv_every": 1,
            # Euler runs
            "horizon": 5.0,
            "euler_cfl": 0.4,
            "euler_n_r": 256,
            "euler_n_z": 256,
            "euler_r_max": 4.0,
            "euler_z_max": 2.0,
            "euler_threshold": AppConstants.EULER_SUPPORT_THRESHOLD,
            "euler_kappa_every": 10,
            # Spectral oracle
            "spectral_n": 128,
            "spectral_box": 10.0,
            "sobolev_s": 1.7,
            "picard_T": None,   # None = half the empirical smallness bound
            "picard_max_iter": 30,
            "picard_tol": 1e-10,
            "picard_substeps": AppConstants.DEFAULT_PICARD_SUBSTEPS,
            "random_pairs": 20,
            "random_n": 32,
            "picard_n": 32,
            # Run control
            "seed": 12345,
            "threads": None,  # None = env var or cpu count
            "output_dir": "results",
            "log_level": "INFO",
        }

    def load_config(self, config_file: str) -> Dict[str, Any]:
        """Load configuration from a JSON file"""
        try:
            with open(config_file, "r", encoding="utf-8") as f:
                text = f.read()
        except OSError as e:
            raise ConfigError("config_file", f"cannot read {config_file}: {e}")
        return self.parse_text(text)

    def parse_text(self, text: str) -> Dict[str, Any]:
        """Parse a flat JSON object and merge it over the defaults"""
        try:
            loaded = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as e:
            raise ConfigError("<document>", f"invalid JSON: {e}")
        if not isinstance(loaded, dict):
            raise ConfigError("<document>", "must be a flat JSON object")

        config = dict(self.default_config)
        for key, value in loaded.items():
            if key not in config:
                raise ConfigError(key, "unknown key")
            if isinstance(value, dict):
                raise ConfigError(key, "nested objects are not allowed")
            config[key] = value
        self.config = config
        return config

    def apply_overrides(self, overrides: List[str]) -> None:
        """Apply key=value overrides from the command line"""
        for item in overrides:
            if "=" not in item:
                raise ConfigError(item, "override must look like key=value")
            key, raw = item.split("=", 1)
            key = key.strip()
            if key not in self.default_config:
                raise ConfigError(key, "unknown key")
            try:
                value = json.loads(raw)
            except json.JSONDecodeError:
                value = raw
            self.config[key] = value

    def get(self, key: str, default: Any = None) -> Any:
        """Get a config value"""
        return self.config.get(key, default)

    def set(self, key: str, value: Any) -> None:
        """Set a config value (validated on the next build)"""
        if key not in self.default_config:
            raise ConfigError(key, "unknown key")
        self.config[key] = value

    def save_config(self, path: str) -> None:
        """Write the resolved configuration as a flat JSON document"""
        resolved = {name: self.config.get(name) for name in config_field_names()}
        with open(path, "w", encoding="utf-8") as f:
            json.dump(resolved, f, indent=2, sort_keys=True)

    def validate_config(self) -> "RunConfig":
        """Validate types and constraints and return the resolved RunConfig"""
        c = dict(self.config)

        mode = c["mode"]
        if mode is None:
            raise ConfigError("mode", "is mandatory")
        if mode not in MODES:
            raise ConfigError("mode", f"must be one of {', '.join(MODES)}")

        ints = ("n_r", "n_z", "rule_order", "rule_levels", "max_steps", "snapshot_every",
                "csv_every", "euler_n_r", "euler_n_z", "euler_kappa_every", "spectral_n",
                "picard_max_iter", "picard_substeps", "random_pairs", "random_n", "picard_n", "seed")
        for key in ints:
            c[key] = _as_int(key, c[key])

        floats = ("r_min", "r_max", "z_min", "z_max", "center_r", "center_z", "radius_r",
                  "radius_z", "amplitude", "cfl_factor", "lower_curve_tol", "kappa_safety",
                  "ivse_threshold", "sup_norm_cap", "t_max", "horizon", "euler_cfl",
                  "euler_r_max", "euler_z_max", "euler_threshold", "spectral_box",
                  "sobolev_s", "picard_tol")
        for key in floats:
            c[key] = _as_float(key, c[key])

        for key in ("delta", "picard_T"):
            if c[key] is not None:
                c[key] = _as_float(key, c[key])
                _require(key, c[key] > 0, "must be positive")
        if c["threads"] is not None:
            c["threads"] = _as_int("threads", c["threads"])
            _require("threads", c["threads"] >= 1, "must be at least 1")

        for key in ("n_r", "n_z", "euler_n_r", "euler_n_z"):
            _require(key, c[key] >= 2, "must be at least 2")
        for key in ("rule_order", "max_steps", "csv_every", "euler_kappa_every",
                    "picard_max_iter", "picard_substeps", "random_pairs"):
            _require(key, c[key] >= 1, "must be at least 1")
        _require("rule_levels", c["rule_levels"] >= 0, "must be nonnegative")
        _require("snapshot_every", c["snapshot_every"] >= 0, "must be nonnegative")

        _require("r_min", c["r_min"] > 0, "must be positive (axis excluded)")
        _require("z_min", c["z_min"] >= 0, "must be nonnegative")
        _require("r_max", c["r_max"] > c["r_min"], "must exceed r_min")
        _require("z_max", c["z_max"] > c["z_min"], "must exceed z_min")
        for key in ("radius_r", "radius_z", "cfl_factor", "lower_curve_tol", "sup_norm_cap",
                    "t_max", "horizon", "euler_cfl", "euler_r_max", "euler_z_max",
                    "spectral_box", "picard_tol"):
            _require(key, c[key] > 0, "must be positive")
        _require("kappa_safety", 0 < c["kappa_safety"] <= 1, "must lie in (0, 1]")
        _require("euler_cfl", c["euler_cfl"] <= 1.0, "must not exceed 1")
        _require("ivse_threshold", c["ivse_threshold"] >= 0, "must be nonnegative")
        _require("euler_threshold", 0 <= c["euler_threshold"] < 1, "must lie in [0, 1)")
        _require("spectral_n", c["spectral_n"] >= 8 and c["spectral_n"] % 2 == 0,
                 "must be an even integer >= 8")
        for key in ("random_n", "picard_n"):
            _require(key, c[key] >= 8 and c[key] % 2 == 0, "must be an even integer >= 8")

        if mode in SIGN_CONSTRAINED_MODES:
            _require("amplitude", c["amplitude"] <= 0,
                     "blowup runs require a nonpositive amplitude (omega_theta <= 0 on the upper half-plane)")

        if c["stepper"] not in ("exponential", "rk4"):
            raise ConfigError("stepper", "must be 'exponential' or 'rk4'")

        schedule = c["kappa_schedule"]
        if not isinstance(schedule, list) or not schedule:
            raise ConfigError("kappa_schedule", "must be a nonempty list of strides")
        c["kappa_schedule"] = [_as_int("kappa_schedule", s) for s in schedule]
        _require("kappa_schedule", all(s >= 1 for s in c["kappa_schedule"]),
                 "strides must be at least 1")

        if c["initial_snapshot"] is not None and not isinstance(c["initial_snapshot"], str):
            raise ConfigError("initial_snapshot", "must be a path string")
        if not isinstance(c["output_dir"], str) or not c["output_dir"]:
            raise ConfigError("output_dir", "must be a nonempty path string")
        if str(c["log_level"]).upper() not in ("DEBUG", "INFO", "WARNING", "ERROR"):
            raise ConfigError("log_level", "must be DEBUG, INFO, WARNING or ERROR")
        c["log_level"] = str(c["log_level"]).upper()

        self.config = c
        return RunConfig(**c)


@dataclass(frozen=True)
class RunConfig:
    """Validated, immutable run configuration"""
    mode: str
    n_r: int
    n_z: int
    r_min: float
    r_max: float
    z_min: float
    z_max: float
    center_r: float
    center_z: float
    radius_r: float
    radius_z: float
    amplitude: float
    initial_snapshot: Optional[str]
    rule_order: int
    rule_levels: int
    delta: Optional[float]
    stepper: str
    cfl_factor: float
    lower_curve_tol: float
    kappa_safety: float
    kappa_schedule: List[int]
    ivse_threshold: float
    sup_norm_cap: float
    t_max: float
    max_steps: int
    snapshot_every: int
    csv_every: int
    horizon: float
    euler_cfl: float
    euler_n_r: int
    euler_n_z: int
    euler_r_max: float
    euler_z_max: float
    euler_threshold: float
    euler_kappa_every: int
    spectral_n: int
    spectral_box: float
    sobolev_s: float
    picard_T: Optional[float]
    picard_max_iter: int
    picard_tol: float
    picard_substeps: int
    random_pairs: int
    random_n: int
    picard_n: int
    seed: int
    threads: Optional[int]
    output_dir: str
    log_level: str

    def to_dict(self) -> Dict[str, Any]:
        """Resolved configuration as a flat dict"""
        return asdict(self)

    def thread_count(self) -> int:
        """Threads from config, then environment, then cpu count"""
        if self.threads is not None:
            return self.threads
        env = os.environ.get(AppConstants.THREADS_ENV_VAR)
        if env:
            try:
                return max(1, int(env))
            except ValueError:
                raise ConfigError(AppConstants.THREADS_ENV_VAR, "must be an integer")
        return os.cpu_count() or 1


def parse_config(text: str, overrides: Optional[List[str]] = None) -> RunConfig:
    """Parse a flat JSON document into a validated RunConfig"""
    manager = ConfigManager()
    manager.parse_text(text)
    if overrides:
        manager.apply_overrides(overrides)
    return manager.validate_config()


def config_field_names() -> List[str]:
    """Names of every RunConfig field, in declaration order"""
    return [f.name for f in fields(RunConfig)]


def _as_int(key: str, value: Any) -> int:
    if isinstance(value, bool):
        raise ConfigError(key, "must be an integer")
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if not isinstance(value, int):
        raise ConfigError(key, "must be an integer")
    return value


def _as_float(key: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, "must be a number")
    return float(value)


def _require(key: str, condition: bool, constraint: str) -> None:
    if not condition:
        raise ConfigError(key, constraint)


# Application Constants
class AppConstants:
    """Application-wide constants and settings"""

    VERSION = "1.0.0"
    APP_NAME = "vortexlab"

    # Artifact file names
    MANIFEST_FILE = "manifest.json"
    ERROR_FILE = "error.json"
    STEPS_CSV = "steps.csv"
    REPORT_JSON = "report.json"
    SNAPSHOT_DIR = "snapshots"
    RESOLVED_CONFIG_FILE = "resolved_config.json"

    # Environment
    THREADS_ENV_VAR = "VORTEXLAB_THREADS"

    # Numerical defaults
    DEFAULT_RULE_ORDER = 32
    DEFAULT_CFL = 0.1
    DEFAULT_LOWER_CURVE_TOL = 0.02
    DEFAULT_KAPPA_SAFETY = 0.9
    IVSE_SUPPORT_THRESHOLD = 1e-12
    EULER_SUPPORT_THRESHOLD = 1e-6
    DEFAULT_SUP_NORM_CAP = 1e6
    DEFAULT_PICARD_SUBSTEPS = 64
    CSV_FLOAT_FORMAT = "{:.17g}"
    DELTA_SENSITIVITY_TOL = 0.05

    # Logging
    LOG_FORMAT = "%(asctime)s - %(levelname)s - %(name)s - %(message)s"
    LOG_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


# Global configuration instance
_config_manager: Optional[ConfigManager] = None

def get_config() -> ConfigManager:
    """Get global configuration manager instance"""
    global _config_manager
    if _config_manager is None:
        _config_manager = ConfigManager()
    return _config_manager

def init_config(config_file: Optional[str] = None) -> ConfigManager:
    """Initialize global configuration manager"""
    global _config_manager
    _config_manager = ConfigManager(config_file)
    return _config_manager
