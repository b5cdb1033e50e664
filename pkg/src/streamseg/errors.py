"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes or dimensions are inconsistent."""


class ConfigError(ValueError):
    """A configuration value is invalid or unknown."""


class FormatError(ValueError):
    """A serialized file violates its format; message names the locus."""


class CoverageError(ValueError):
    """A prediction set does not cover every required (query, frame)."""


class StateError(RuntimeError):
    """An operation ran against missing or inconsistent mutable state."""


class EvaluationError(RuntimeError):
    """A numeric evaluation produced a non-finite result."""
