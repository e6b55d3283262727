"""Exception hierarchy.

CLI exit codes map onto the three top-level families: usage problems (1),
data problems (2) and numeric aborts (3).
"""


class FtCbamError(Exception):
    pass


class UsageError(FtCbamError):
    exit_code = 1


class ContractError(UsageError, ValueError):
    """A caller broke an operation's precondition."""


class DimensionError(ContractError):
    pass


class GeometryError(ContractError):
    """Kernel/stride/padding combination yields an empty output."""


class ConfigError(UsageError):
    pass


class DataError(FtCbamError):
    exit_code = 2


class LengthError(DataError, ValueError):
    pass


class SampleRateError(DataError, ValueError):
    pass


class WavError(DataError):
    pass


class MalformedHeaderError(WavError):
    pass


class UnsupportedEncodingError(WavError):
    pass


class UnsupportedSampleRateError(WavError):
    pass


class UnsupportedChannelsError(WavError):
    pass


class TrialParseError(DataError):
    def __init__(self, lineno: int, line: str, reason: str):
        super().__init__(f"line {lineno}: {reason}: {line!r}")
        self.lineno = lineno


class UnknownUtteranceError(DataError, KeyError):
    pass


class CheckpointError(DataError):
    pass


class IntegrityError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TensorNameError(CheckpointError):
    def __init__(self, missing, unexpected):
        self.missing = sorted(missing)
        self.unexpected = sorted(unexpected)
        parts = []
        if self.missing:
            parts.append("missing: " + ", ".join(self.missing))
        if self.unexpected:
            parts.append("unexpected: " + ", ".join(self.unexpected))
        super().__init__("checkpoint tensor names do not match model; " + "; ".join(parts))


class NumericError(FtCbamError, ArithmeticError):
    exit_code = 3
