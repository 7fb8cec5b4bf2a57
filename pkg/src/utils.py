import yaml
import logging
import os
from datetime import datetime
from typing import Dict, Any, Optional

DEFAULTS: Dict[str, Any] = {
    'engine': {'latency': 1, 'round_gap': 1, 'start_at': 1, 'horizon': 200},
    'symbolic': {'depth': 6},
    'explorer': {'cap': 10_000_000, 'workers': 1, 'max_interventions': 2},
    'output': {'trace_dir': 'traces', 'report_dir': 'reports'},
    'logging': {'level': 'INFO', 'dir': 'logs'},
}

VERDICT_SYMBOLS = {"holds": "✅", "violated": "❌"}


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


class Config:
    """Simulator settings: config.yaml layered over DEFAULTS."""

    def __init__(self, config_path: str = "config.yaml"):
        self.config_path = config_path
        try:
            with open(config_path, 'r') as f:
                loaded = yaml.safe_load(f) or {}
        except FileNotFoundError:
            logging.getLogger("cra").debug(f"Config file {config_path} not found, using defaults")
            loaded = {}
        self.config = _merge(DEFAULTS, loaded)

    def get(self, key_path: str, default=None):
        """Get configuration value using dot notation (e.g., 'engine.latency')."""
        value = self.config
        for key in key_path.split('.'):
            if not isinstance(value, dict) or key not in value:
                return default
            value = value[key]
        return value

    def logger(self, session_type: str, log_level: Optional[str] = None) -> "Logger":
        return Logger(log_level=log_level or self.get('logging.level', 'INFO'),
                      session_type=session_type, log_dir=self.get('logging.dir', 'logs'))


class Logger:
    """Session logger for runs, explorations and checks: console plus one file per session."""

    def __init__(self, name: str = "cra", log_level: str = "INFO", session_type: str = "session",
                 log_dir: Optional[str] = "logs"):
        self.logger = logging.getLogger(name)
        self.logger.setLevel(getattr(logging, log_level.upper()))

        if not self.logger.handlers:
            self._setup_handlers(session_type, log_dir)

    def _setup_handlers(self, session_type: str, log_dir: Optional[str]):
        formatter = logging.Formatter('%(asctime)s - %(levelname)s - %(name)s - %(message)s')

        console_handler = logging.StreamHandler()
        console_handler.setFormatter(formatter)
        self.logger.addHandler(console_handler)

        # no file when log_dir is None (tests)
        if log_dir is None:
            return
        os.makedirs(log_dir, exist_ok=True)
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        file_handler = logging.FileHandler(os.path.join(log_dir, f"{session_type}_{timestamp}.log"))
        file_handler.setFormatter(formatter)
        self.logger.addHandler(file_handler)

    def info(self, msg: str):
        self.logger.info(msg)

    def warning(self, msg: str):
        self.logger.warning(msg)

    def error(self, msg: str):
        self.logger.error(msg)

    def banner(self, title: str, width: int = 80):
        self.logger.info("=" * width)
        self.logger.info(title)
        self.logger.info("=" * width)

    def rule(self, width: int = 80):
        self.logger.info("=" * width)

    def verdict(self, prop: str, result: str, detail: str = ""):
        """One line per property: symbol, id, result and optional detail."""
        symbol = VERDICT_SYMBOLS.get(result, "➖")
        self.logger.info(f"{symbol} {prop:<4} {result}{' - ' + detail if detail else ''}")
