"""Toolkit logger: console plus a rotating daily file under ~/.catsim/logs."""

import logging
import logging.handlers
from datetime import datetime
from pathlib import Path

class Logger:
    """Centralized logging configuration for the toolkit."""

    _instance = None

    @classmethod
    def get_instance(cls):
        """Get or create the singleton logger instance."""
        if cls._instance is None:
            cls._instance = Logger()
        return cls._instance

    def __init__(self):
        """Initialize the logger with console and rotating file handlers."""
        self.logger = logging.getLogger('catsim')
        self.logger.setLevel(logging.INFO)
        self.logger.propagate = False

        # Create logs directory if it doesn't exist
        log_dir = Path.home() / '.catsim' / 'logs'
        log_dir.mkdir(parents=True, exist_ok=True)

        log_file = log_dir / f"catsim_{datetime.now().strftime('%Y-%m-%d')}.log"
        file_handler = logging.handlers.RotatingFileHandler(
            filename=log_file,
            maxBytes=5*1024*1024,  # 5MB
            backupCount=10
        )
        file_handler.setLevel(logging.DEBUG)

        # Console handler
        console_handler = logging.StreamHandler()
        console_handler.setLevel(logging.INFO)

        formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        )
        file_handler.setFormatter(formatter)
        console_handler.setFormatter(formatter)

        self.logger.addHandler(file_handler)
        self.logger.addHandler(console_handler)
        self.console_handler = console_handler

    def set_level(self, level):
        """Set the logging level on the logger and the console."""
        self.logger.setLevel(level)
        self.console_handler.setLevel(level)

    def apply_setting(self, name):
        """Set the level from a runtime setting such as 'DEBUG'; unknown names keep INFO."""
        level = logging.getLevelName(str(name).upper())
        if not isinstance(level, int):
            self.logger.warning(f"Unknown log level {name!r}, using INFO")
            level = logging.INFO
        self.set_level(level)

    def get_logger(self):
        """Get the configured logger instance."""
        return self.logger

def get_logger():
    """Convenience function to get the configured logger."""
    return Logger.get_instance().get_logger()
