from __future__ import annotations


class Rank2sError(ValueError):
    """Base class for input and feasibility errors raised by rank2s."""


class EmptySample(Rank2sError):
    pass


class NonFiniteValue(Rank2sError):
    pass


class TiesPresent(Rank2sError):
    def __init__(self, duplicates: list[float]) -> None:
        preview = ", ".join(f"{v:g}" for v in duplicates[:5])
        suffix = "" if len(duplicates) <= 5 else f" (showing 5/{len(duplicates)})"
        super().__init__(
            f"Tied values in pooled sample: {preview}{suffix}. "
            "The rank tests assume continuous data; rerun with tie_policy=midrank "
            "(--tie-policy midrank) to use average ranks, which voids the distribution-free guarantee."
        )
        self.duplicates = duplicates


class UnbalancedSamples(Rank2sError):
    pass


class DimensionMismatch(Rank2sError):
    pass


class NonMonotoneCdf(Rank2sError):
    pass


class EnumerationTooLarge(Rank2sError):
    def __init__(self, count: int, cap: int) -> None:
        super().__init__(
            f"Exact enumeration needs {count} assignments, above the cap of {cap}. "
            "Use the mc or asymptotic null model instead, or raise the cap."
        )
        self.count = count
        self.cap = cap


class UnsupportedStatistic(Rank2sError):
    pass


class InvalidParameters(Rank2sError):
    pass


class ParseError(Rank2sError):
    def __init__(self, path: str, line: int | None, message: str) -> None:
        where = f"{path}:{line}" if line is not None else path
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line


class ConfigValidationError(Rank2sError):
    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field
