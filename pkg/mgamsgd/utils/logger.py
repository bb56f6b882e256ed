"""
Logging System - Configures console and rotating file logging.
"""
import os
import logging
import logging.handlers
from typing import Any, Dict, Optional

from colorama import Fore, Style, init as colorama_init

DEFAULT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DEFAULT_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

LEVEL_COLORS = {
    "DEBUG": Fore.CYAN,
    "INFO": Fore.GREEN,
    "WARNING": Fore.YELLOW,
    "ERROR": Fore.RED,
    "CRITICAL": Fore.RED + Style.BRIGHT,
}


class ColorFormatter(logging.Formatter):
    """Formatter that colours the level name for terminal output."""

    def format(self, record: logging.LogRecord) -> str:
        color = LEVEL_COLORS.get(record.levelname)
        if not color:
            return super().format(record)
        original = record.levelname
        record.levelname = f"{color}{original}{Style.RESET_ALL}"
        try:
            return super().format(record)
        finally:
            record.levelname = original


def _level(name: str) -> int:
    level = logging.getLevelName(str(name).upper())
    if not isinstance(level, int):
        raise ValueError(f"Unknown log level: {name}")
    return level


def setup_logging(config: Optional[Dict[str, Any]] = None) -> logging.Logger:
    """
    Set up logging based on configuration.

    Args:
        config: Logging configuration with keys level, file, format,
            date_format, max_bytes, backup_count and loggers. A null
            file installs the console handler only.

    Returns:
        The root logger
    """
    config = config or {}

    log_level = config.get("level", "INFO")
    log_file = config.get("file")
    log_format = config.get("format", DEFAULT_FORMAT)
    log_date_format = config.get("date_format", DEFAULT_DATE_FORMAT)
    max_bytes = config.get("max_bytes", 10 * 1024 * 1024)  # 10 MB
    backup_count = config.get("backup_count", 5)

    colorama_init()

    root_logger = logging.getLogger()
    root_logger.setLevel(_level(log_level))

    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(ColorFormatter(log_format, log_date_format))
    root_logger.addHandler(console_handler)

    if log_file:
        log_dir = os.path.dirname(log_file)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)
        file_handler = logging.handlers.RotatingFileHandler(
            log_file, maxBytes=max_bytes, backupCount=backup_count
        )
        file_handler.setFormatter(logging.Formatter(log_format, log_date_format))
        root_logger.addHandler(file_handler)

    for logger_name, logger_level in (config.get("loggers") or {}).items():
        logging.getLogger(logger_name).setLevel(_level(logger_level))

    logging.debug(f"Logging initialized with level {log_level}")

    return root_logger
