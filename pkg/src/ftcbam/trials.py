"""Verification trial lists: one ``label path_a path_b`` line per trial, label 1 = same speaker."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import TrialParseError


@dataclass(frozen=True)
class Trial:
    same: bool
    utt_a: str
    utt_b: str

    @property
    def label(self) -> int:
        return int(self.same)


def parse_trial_lines(lines) -> list[Trial]:
    trials = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 3:
            raise TrialParseError(lineno, line, f"expected 3 fields, found {len(fields)}")
        if fields[0] not in ("0", "1"):
            raise TrialParseError(lineno, line, "label must be 0 or 1")
        trials.append(Trial(fields[0] == "1", fields[1], fields[2]))
    return trials


def parse_trials(path) -> list[Trial]:
    with open(path, encoding="utf-8") as fh:
        return parse_trial_lines(fh)


def write_trials(path, trials) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in trials:
            fh.write(f"{t.label} {t.utt_a} {t.utt_b}\n")
