import pytest

from ftcbam.errors import TrialParseError
from ftcbam.trials import Trial, parse_trial_lines, parse_trials, write_trials


def test_parses_labels_and_paths():
    trials = parse_trial_lines(["1 a/x.wav b/y.wav\n", "\n", "0  a/x.wav   c/z.wav"])
    assert trials == [Trial(True, "a/x.wav", "b/y.wav"), Trial(False, "a/x.wav", "c/z.wav")]
    assert [t.label for t in trials] == [1, 0]


@pytest.mark.parametrize("lines, lineno", [
    (["2 a b"], 1),
    (["1 a b", "1 a"], 2),
    (["1 a b", "", "0 a b c"], 3),
])
def test_bad_lines_report_their_number(lines, lineno):
    with pytest.raises(TrialParseError) as info:
        parse_trial_lines(lines)
    assert info.value.lineno == lineno
    assert f"line {lineno}" in str(info.value)


def test_empty_file_gives_no_trials(tmp_path):
    (tmp_path / "t.txt").write_text("")
    assert parse_trials(tmp_path / "t.txt") == []


def test_round_trip(tmp_path):
    trials = [Trial(True, "p", "q"), Trial(False, "q", "r")]
    write_trials(tmp_path / "t.txt", trials)
    assert parse_trials(tmp_path / "t.txt") == trials
