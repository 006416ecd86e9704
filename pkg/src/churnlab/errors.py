"""Exception hierarchy. Each family maps to a CLI exit code."""


class ChurnLabError(Exception):
    exit_code = 1


class ConfigError(ChurnLabError):
    """Invalid configuration, missing paths, incompatible artifacts."""

    exit_code = 2


class ArtifactVersionError(ConfigError):
    pass


class DataError(ChurnLabError):
    exit_code = 3


class SchemaError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)


class FormatError(DataError):
    pass


class UnfitError(DataError):
    pass


class NumericalError(ChurnLabError):
    exit_code = 4
