"""Shared exception types."""


class ConfigError(ValueError):
    """Invalid task/model/experiment configuration."""


class ParseError(ValueError):
    """Malformed on-disk artifact (corpus line, checkpoint, config file)."""


class StateError(RuntimeError):
    """Operation applied to an object in the wrong state (e.g. no masked slot)."""
