"""
Utility modules for the toolkit.
"""

from src.utils.logging import get_logger
from src.utils.config import get_config
from src.utils.file_service import get_file_service

__all__ = ['get_logger', 'get_config', 'get_file_service']
