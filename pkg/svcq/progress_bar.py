"""Progress display for corpus passes and multi-stage commands.

Bars are written to stderr and vanish when done; they are disabled unless
the ``progress`` setting is on.
"""

from tqdm import tqdm as _tqdm
from colorama import Fore as _Fore

_STAGE_WIDTH = 12
_CORPUS_FORMAT = (
    "{desc: <%d} |%s{bar}%s| {n_fmt: >5}/{total_fmt: >5} utt [{elapsed} < {remaining}]{postfix}"
    % (_STAGE_WIDTH, _Fore.GREEN, _Fore.RESET)
)
_STAGE_FORMAT = "{desc: <%d} %s{n_fmt}/{total_fmt}%s stages [{elapsed}]{postfix}" % (
    _STAGE_WIDTH,
    _Fore.BLUE,
    _Fore.RESET,
)


def _stage_label(text):
    text = str(text)
    if len(text) > _STAGE_WIDTH:
        return text[: _STAGE_WIDTH - 1] + "~"
    return text


class StageProgress:
    """One tick per finished stage of a command; ``advance`` names the next stage."""

    def __init__(self, stages, disable):
        self.stages = list(stages)
        self._done = 0
        self._bar = _tqdm(
            total=len(self.stages),
            bar_format=_STAGE_FORMAT,
            leave=False,
            disable=disable,
        )
        self._bar.set_description_str(_stage_label(self.stages[0]))

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        self._bar.close()

    @property
    def current(self):
        return self.stages[self._done] if self._done < len(self.stages) else None

    def advance(self):
        self._done += 1
        self._bar.update()
        self._bar.set_description_str(_stage_label(self.current or "done"))


def corpus_progress(iterable, disable, total, stage):
    """Wrap a per-utterance iterable in a bar labelled with ``stage``."""
    return _tqdm(
        iterable,
        desc=_stage_label(stage),
        total=total,
        bar_format=_CORPUS_FORMAT,
        leave=False,
        disable=disable,
    )
