"""
This module contains the `Environment` class.
"""

import logging as _logging
import os as _os
from pathlib import Path as _Path

import toml as _toml

from .alignment import DEFAULT_PHONE_TIER as _DEFAULT_PHONE_TIER
from .alignment import DEFAULT_SILENCE_LABELS as _DEFAULT_SILENCE_LABELS
from .alignment import DEFAULT_WORD_TIER as _DEFAULT_WORD_TIER
from .codec import AlignmentOptions as _AlignmentOptions
from .codec import KMeansParams as _KMeansParams
from .codec import default_jobs as _default_jobs
from .errors import InvalidValue as _InvalidValue
from .probe import DEFAULT_BATCH_SIZE as _DEFAULT_BATCH_SIZE
from .probe import DEFAULT_EPOCHS as _DEFAULT_EPOCHS
from .probe import DEFAULT_LEARNING_RATE as _DEFAULT_LEARNING_RATE
from .probe import DEFAULT_PATIENCE as _DEFAULT_PATIENCE
from .probe import ProbeHyperParams as _ProbeHyperParams
from .quantizer import DEFAULT_MAX_ITERS as _DEFAULT_MAX_ITERS
from .quantizer import DEFAULT_TOL as _DEFAULT_TOL
from .tier import Tier as _Tier

_LOGGER = _logging.getLogger(__name__)

ENVIRONMENT_PREFIX = "SVCQ_"
CONFIG_TABLE = "svcq"
_DEFAULT_K = 500


def _parse_bool(value):
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _parse_labels(value):
    if isinstance(value, str):
        return frozenset(label.strip().lower() for label in value.split(","))
    return frozenset(str(label).strip().lower() for label in value)


# name -> (parser, default)
SETTINGS = {
    "seed": (int, 0),
    "max_iters": (int, _DEFAULT_MAX_ITERS),
    "tol": (float, _DEFAULT_TOL),
    "k_frame": (int, _DEFAULT_K),
    "k_phone": (int, _DEFAULT_K),
    "k_word": (int, _DEFAULT_K),
    "k_utterance": (int, _DEFAULT_K),
    "standardize": (_parse_bool, False),
    "jobs": (int, None),
    "silence_labels": (_parse_labels, _DEFAULT_SILENCE_LABELS),
    "phone_tier": (str, _DEFAULT_PHONE_TIER),
    "word_tier": (str, _DEFAULT_WORD_TIER),
    "learning_rate": (float, _DEFAULT_LEARNING_RATE),
    "epochs": (int, _DEFAULT_EPOCHS),
    "batch_size": (int, _DEFAULT_BATCH_SIZE),
    "patience": (int, _DEFAULT_PATIENCE),
    "progress": (_parse_bool, False),
}


def _read_config_file(path):
    path = _Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"No configuration file '{path}'")
    try:
        table = _toml.load(path).get(CONFIG_TABLE, {})
    except _toml.TomlDecodeError as error:
        raise _InvalidValue(f"{path}: {error}") from error
    unknown = sorted(set(table) - set(SETTINGS))
    if unknown:
        _LOGGER.warning("%s: ignoring unknown settings %s", path, ", ".join(unknown))
    return table


class Environment:
    """Resolved settings of one svcq invocation.

    Every setting is taken from the first source that defines it: the command
    line arguments, an ``SVCQ_<NAME>`` environment variable, the ``[svcq]``
    table of the configuration file, the built-in default.
    """

    def __init__(self, args, environ=None):
        environ = _os.environ if environ is None else environ
        config_file = args.get("config") or environ.get(f"{ENVIRONMENT_PREFIX}CONFIG")
        self.config_file = _Path(config_file) if config_file else None
        config = _read_config_file(self.config_file) if self.config_file else {}

        self.sources = {}
        for name, (parser, default) in SETTINGS.items():
            environ_name = f"{ENVIRONMENT_PREFIX}{name.upper()}"
            if args.get(name) is not None:
                value, source = args[name], "command line"
            elif environ_name in environ:
                value, source = environ[environ_name], environ_name
            elif name in config:
                value, source = config[name], str(self.config_file)
            else:
                value, source = default, "default"
            if value is not None and source != "default":
                try:
                    value = parser(value)
                except (TypeError, ValueError) as error:
                    raise _InvalidValue(f"setting '{name}' from {source}: {error}") from error
            setattr(self, name, value)
            self.sources[name] = source

        if self.jobs is None:
            self.jobs = _default_jobs()
        if self.jobs < 1:
            raise _InvalidValue(f"jobs must be >= 1, got {self.jobs}")

        for name in SETTINGS:
            _LOGGER.info("%s = %r (%s)", name, getattr(self, name), self.sources[name])

    def k_per_tier(self) -> dict:
        return {
            _Tier.Frame: self.k_frame,
            _Tier.Phone: self.k_phone,
            _Tier.Word: self.k_word,
            _Tier.Utterance: self.k_utterance,
        }

    def kmeans_params(self) -> _KMeansParams:
        return _KMeansParams(self.max_iters, self.tol, self.standardize)

    def alignment_options(self) -> _AlignmentOptions:
        return _AlignmentOptions(self.phone_tier, self.word_tier, self.silence_labels)

    def probe_hyper_params(self, class_weights=None) -> _ProbeHyperParams:
        return _ProbeHyperParams(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
            patience=self.patience,
            class_weights=class_weights,
        )
