import sys
from datetime import datetime

from loguru import logger as _logger

from app.config import PROJECT_ROOT, config


LOG_DIR = PROJECT_ROOT / "logs"


def define_log_level(
    print_level: str = "INFO", logfile_level: str | None = "DEBUG", name: str = "nvcycle"
):
    """Route log records to stderr at print_level and to a timestamped file under logs/.

    logfile_level=None keeps the run off disk.
    """
    stamp = datetime.now().strftime("%Y%m%d%H%M%S")

    _logger.remove()
    _logger.add(sys.stderr, level=print_level)
    if logfile_level is not None:
        _logger.add(LOG_DIR / f"{name}_{stamp}.log", level=logfile_level)
    return _logger


logger = define_log_level(config.logging.print_level, config.logging.logfile_level)
