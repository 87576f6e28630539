"""Logger module for handling application-wide logging configuration."""

import logging
import os
from datetime import datetime
from typing import Optional
from .utils import LOG_FORMAT, LOG_DATE_FORMAT

_logger: Optional[logging.Logger] = None
_level: str = "INFO"
_log_dir: Optional[str] = None

def configure_logging(level: str = "INFO", log_dir: Optional[str] = None) -> None:
    """
    Set level and log directory used when the first logger is created.

    Args:
        level: Logging level name.
        log_dir: Directory for the run log file, or None for console only.
    """
    global _logger, _level, _log_dir

    _level = level.upper()
    _log_dir = log_dir

    if _logger is not None:
        root = logging.getLogger()
        for handler in list(root.handlers):
            root.removeHandler(handler)
        _logger = None

def setup_logger(name: str) -> logging.Logger:
    """
    Configure and return a logger instance.
    
    Args:
        name: The name of the module requesting the logger.
        
    Returns:
        logging.Logger: Configured logger instance.
    """
    global _logger
    
    if _logger is not None:
        return logging.getLogger(name)

    handlers: list[logging.Handler] = [logging.StreamHandler()]

    if _log_dir:
        if not os.path.exists(_log_dir):
            os.makedirs(_log_dir)

        log_file: str = os.path.join(
            _log_dir, f"isolate_{datetime.now().strftime(LOG_DATE_FORMAT)}.log"
        )
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=getattr(logging, _level, logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )

    _logger = logging.getLogger(name)
    _logger.debug("Logger setup complete")
    
    return _logger
