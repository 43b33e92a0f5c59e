"""Exception hierarchy with machine-parsable categories for the CLI/service."""


class ToolkitError(Exception):
    """Base error; `category` is the stable machine-readable tag."""

    category = "error"


class ValidationError(ToolkitError):
    """Invalid values, shapes, ranges, or domain contract violations."""

    category = "validation"


class FormatError(ToolkitError):
    """Malformed or inconsistent files (manifests, payloads, model files)."""

    category = "format"


class ConfigError(ToolkitError):
    """Invalid configuration or command-line arguments."""

    category = "config"
