"""
Classifying mixtures of Bayesian group factor analyzers with shared factors.
"""

import logging
import os

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(component)s: %(message)s"
SOURCE_LOG_FORMAT = (
    "%(asctime)s - %(levelname)s (%(pathname)s::%(funcName)s::%(lineno)d): %(message)s"
)


def log_filter(record: logging.LogRecord) -> bool:
    """
    Adds `component`, the module below the package ("inference", "main", ...),
    and shortens `pathname` to be relative to the working directory, so both
    can be used in --logging-format.
    """
    record.component = record.name.partition(".")[2] or record.name
    try:
        record.pathname = os.path.relpath(record.pathname)
    except ValueError:
        pass
    return True


def log_formatter(fmt=LOG_FORMAT):
    return logging.Formatter(fmt)


LOG_HANDLER = logging.StreamHandler()
LOG_HANDLER.setLevel(logging.INFO)
LOG_HANDLER.setFormatter(log_formatter())
LOG_HANDLER.addFilter(log_filter)
LOG = logging.getLogger(__name__)
LOG.addHandler(LOG_HANDLER)
