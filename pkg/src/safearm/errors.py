"""Shared exception types."""


class ConfigError(ValueError):
    """Invalid configuration: bad scenario field, grid spec, or budget.

    Scenario parsing attaches the offending field path and source line so
    the CLI can point at the exact spot in the file.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = f"{path}: " if path else ""
        at = f" (line {line})" if line is not None else ""
        super().__init__(f"{where}{message}{at}")


class FieldFormatError(Exception):
    """Malformed or truncated distance-field file."""
