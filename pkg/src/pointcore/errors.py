"""Exception types raised across the pipeline."""


class PointCoreError(Exception):
    """Base class for all pipeline errors."""


class DataError(PointCoreError):
    """Input data is malformed or inconsistent (CLI exit status 3)."""


class InvalidParams(PointCoreError, ValueError):
    pass


class KTooLarge(PointCoreError, ValueError):
    pass


class DegenerateNeighborhood(UserWarning):
    """Issued when a normal is estimated from a rank-deficient neighborhood."""


class DegenerateSample(PointCoreError):
    pass


class NoCorrespondences(PointCoreError):
    pass


class RegistrationFailed(PointCoreError):
    pass


class TooFewCenters(PointCoreError, ValueError):
    pass


class FeatureFileMismatch(DataError):
    pass


class BankTooSmall(PointCoreError, ValueError):
    pass


class DimensionMismatch(DataError):
    pass


class LengthMismatch(PointCoreError, ValueError):
    pass


class SingleClass(PointCoreError, ValueError):
    pass


class NoPositives(PointCoreError, ValueError):
    pass


class RegionEmpty(PointCoreError):
    pass


class ParseError(DataError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class UnsupportedFormat(DataError):
    pass


class CountMismatch(DataError):
    pass


class FormatVersionMismatch(DataError):
    def __init__(self, found, expected):
        self.found = found
        self.expected = expected
        super().__init__(f"bank format version {found} is not supported (expected {expected})")


class ChecksumMismatch(DataError):
    pass


class ConfigError(PointCoreError, ValueError):
    pass
