"""Exception hierarchy.

The CLI maps the three top-level families onto exit codes (config 2,
data 3, numeric 4).
"""


class GbllError(Exception):
    exit_code = 1


class ConfigError(GbllError):
    exit_code = 2


class DataError(GbllError):
    exit_code = 3


class NumericError(GbllError):
    exit_code = 4


# ingestion
class MissingCell(DataError):
    def __init__(self, country, week):
        self.country, self.week = country, week
        super().__init__(f"missing cell for country={country!r} week={week!r}")


class NonPositiveRate(DataError):
    def __init__(self, country, age, week, value=None):
        self.country, self.age, self.week, self.value = country, age, week, value
        super().__init__(
            f"non-positive or non-finite rate {value!r} at country={country!r} age={age!r} week={week!r}"
        )


class RaggedYear(DataError):
    def __init__(self, year, count):
        self.year, self.count = year, count
        super().__init__(f"year {year} has {count} weeks, expected 52")


class UnknownCountry(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class InsufficientData(DataError):
    pass


# numerics
class DegenerateLoading(NumericError):
    pass


class ZeroPredictor(NumericError):
    pass


class ZeroVariance(NumericError):
    pass


class InsufficientLength(NumericError):
    pass


class RankDeficient(NumericError):
    pass


class SeriesTooShort(NumericError):
    pass


class CurveTooShort(NumericError):
    pass


class PathLengthMismatch(NumericError):
    pass


class EmptyClusterUnrecoverable(NumericError):
    pass


class CorruptArtifact(DataError):
    pass
