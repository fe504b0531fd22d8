"""Error types shared across the toolkit.

Each error carries a short category string that the CLI prints in front of
the message, so scripted callers can branch on failure class without parsing
free text.
"""

from __future__ import annotations


class BoxmetaError(Exception):
    """Base class for all toolkit errors."""

    category = "error"


class FormatError(BoxmetaError):
    """Malformed input file: bad value, bad line, duplicate observation."""

    category = "format-error"


class SchemaError(BoxmetaError):
    """Header or shape mismatch: wrong columns, wrong feature count."""

    category = "schema-error"


class DataError(BoxmetaError):
    """Degenerate data: single-class targets, too few rows, constant labels."""

    category = "data-error"


class ConfigError(BoxmetaError):
    """Invalid configuration value or flag combination."""

    category = "config-error"
