"""
Configuration Manager - Loads and validates run configuration files.
"""
import os
import json
import logging
from typing import Any, Dict, Optional

import jsonschema
import yaml

from mgamsgd.core.errors import ConfigurationError
from mgamsgd.modules.trainer import TrainConfig

logger = logging.getLogger(__name__)

CONFIG_ENV = "MGAMSGD_CONFIG"

_NUMBER = {"type": "number"}
_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_PROBABILITY = {"type": "number", "minimum": 0, "maximum": 1}
_COUNT = {"type": "integer", "minimum": 0}
_LEVEL = {"type": "string", "enum": ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]}

CONFIG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "lr_c": {"type": "number", "minimum": 0},
        "lr_f": {"type": "number", "minimum": 0},
        "N_GAi": _COUNT,
        "N_h": {"type": "integer", "minimum": 1},
        "N_nh": {"type": "integer", "minimum": 1},
        "P_sf": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "N_x": {"type": "integer", "minimum": 2},
        "N_y": {"type": "integer", "minimum": 2},
        "N_z": {"type": "integer", "minimum": 2},
        "beta_i": {"type": "number", "minimum": 0},
        "M_g": _PROBABILITY,
        "M_m": _PROBABILITY,
        "M_l": _PROBABILITY,
        "gamma": {"type": ["number", "null"], "minimum": 0},
        "case": {"type": "string", "enum": ["A", "B"]},
        "E": _POSITIVE,
        "nu": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
        "p": _NUMBER,
        "seed": _COUNT,
        "fsgd_iters": _COUNT,
        "csgd_iters": {"type": "integer", "minimum": 1},
        "csgd_backoff": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "csgd_growth": {"type": "number", "minimum": 1},
        "tournament_size": {"type": "integer", "minimum": 2},
        "normalize_stress": {"type": "boolean"},
        "blowup_factor": {"type": "number", "exclusiveMinimum": 1},
        "patience": {"type": "integer", "minimum": 1},
        "sgd_lr": {"type": "number", "minimum": 0},
        "adam_lr": {"type": "number", "minimum": 0},
        "adam_beta1": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "adam_beta2": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "adam_eps": _POSITIVE,
        "num_threads": {"type": "integer", "minimum": 1},
        "sensitivity_levels": {"type": "integer", "minimum": 2},
        "sensitivity_reps": {"type": "integer", "minimum": 1},
        "logging": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "level": _LEVEL,
                "file": {"type": ["string", "null"]},
                "format": {"type": "string"},
                "date_format": {"type": "string"},
                "max_bytes": {"type": "integer", "minimum": 0},
                "backup_count": {"type": "integer", "minimum": 0},
                "loggers": {"type": "object", "additionalProperties": _LEVEL},
            },
        },
    },
}


class ConfigManager:
    """
    Loads a flat YAML or JSON run configuration and validates it.
    """

    def __init__(self, config_path: Optional[str] = None):
        """
        Initialize the ConfigManager.

        Args:
            config_path: Path to the configuration file; falls back to
                $MGAMSGD_CONFIG, and to the built-in defaults without either

        Raises:
            ConfigurationError: If a named file is missing, unreadable or invalid
        """
        self.config_path = config_path or os.environ.get(CONFIG_ENV) or None
        self.config: Dict[str, Any] = {}

        if self.config_path:
            self._load_config()
            logger.info(f"ConfigManager initialized with config from {self.config_path}")
        else:
            logger.info("No configuration file given; using built-in defaults")

    def _load_config(self):
        """Load and validate the configuration file."""
        if not os.path.exists(self.config_path):
            raise ConfigurationError(f"Configuration file not found: {self.config_path}")

        file_ext = os.path.splitext(self.config_path)[1].lower()
        try:
            with open(self.config_path, "r") as f:
                if file_ext in [".yaml", ".yml"]:
                    loaded = yaml.safe_load(f)
                elif file_ext == ".json":
                    loaded = json.load(f)
                else:
                    raise ConfigurationError(f"Unsupported configuration file format: {file_ext}")
        except (yaml.YAMLError, json.JSONDecodeError, OSError) as e:
            raise ConfigurationError(f"Failed to load configuration {self.config_path}: {e}")

        self.config = self.validate(loaded if loaded is not None else {})

    @staticmethod
    def validate(config: Any) -> Dict[str, Any]:
        """
        Check a configuration mapping against the schema.

        Raises:
            ConfigurationError: Naming the first offending key
        """
        if not isinstance(config, dict):
            raise ConfigurationError("Configuration must be a mapping of keys to values")
        try:
            jsonschema.validate(config, CONFIG_SCHEMA, cls=jsonschema.Draft7Validator)
        except jsonschema.ValidationError as e:
            where = ".".join(str(p) for p in e.absolute_path) or "<root>"
            raise ConfigurationError(f"Invalid configuration at {where}: {e.message}")
        return config

    def get_config(self) -> Dict[str, Any]:
        """
        Get the full configuration.

        Returns:
            The configuration dictionary
        """
        return self.config

    def get(self, key: str, default: Any = None) -> Any:
        """
        Get a configuration value by key.

        Args:
            key: Configuration key (dot notation supported)
            default: Default value if key not found

        Returns:
            Configuration value or default
        """
        value = self.config
        for k in key.split("."):
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default
        return value

    def train_config(self, **overrides) -> TrainConfig:
        """Training settings from the file, with keyword overrides by field name."""
        cfg = TrainConfig.from_mapping(self.config)
        return cfg.with_values(**overrides) if overrides else cfg
