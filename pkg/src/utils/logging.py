import logging
import os
from logging.handlers import RotatingFileHandler
from src.config.settings import settings

_configured = False


def setup_logging(level: str = None):
    global _configured
    log_level = getattr(logging, (level or settings.log_level).upper(), logging.INFO)

    if _configured:
        logging.getLogger().setLevel(log_level)
        return logging.getLogger(__name__)

    handlers = [logging.StreamHandler()]
    if settings.log_file:
        os.makedirs(os.path.dirname(settings.log_file) or ".", exist_ok=True)
        handlers.insert(
            0,
            RotatingFileHandler(
                settings.log_file,
                maxBytes=10485760,
                backupCount=5
            )
        )

    logging.basicConfig(
        level=log_level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers
    )
    logging.captureWarnings(True)
    _configured = True

    logger = logging.getLogger(__name__)
    logger.debug(f"Logging setup complete. Level: {logging.getLevelName(log_level)}")
    return logger
