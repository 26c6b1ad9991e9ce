import logging as _logging
import sys as _sys

import tqdm as _tqdm


class TqdmHandler(_logging.StreamHandler):
    """Write log records through tqdm so active progress bars stay intact.

    Records go to stderr; stdout carries the machine-readable output.
    """

    def __init__(self):
        _logging.StreamHandler.__init__(self, _sys.stderr)

    def emit(self, record):
        msg = self.format(record)
        _tqdm.tqdm.write(msg, file=_sys.stderr)


class NamedLoggerAdapter(_logging.LoggerAdapter):
    def process(self, msg, kwargs):
        return "%s: %s" % (str(self.extra["named_element"]), msg), kwargs


class NamedLogger:
    def __init__(self, logger):
        self._logger = NamedLoggerAdapter(logger, {"named_element": self})
