"""Error types raised across the package.

Everything derives from ValueError so callers who only care about "bad input"
can catch one base class, while tests and the CLI can tell the kinds apart.
"""


class ShapeError(ValueError):
    """Array dimensions incompatible with an operation; names both shapes."""


class ConfigError(ValueError):
    """A configuration value is missing, unknown, or out of range."""


class DatasetFormatError(ValueError):
    """An on-disk dataset directory violates the storage format."""


class SplitError(ValueError):
    """A requested train/val/test split cannot be formed."""


class NumericError(ArithmeticError):
    """Non-finite values where finite ones are required (divergence, bad logits)."""


class EvaluationError(ValueError):
    """A metric is undefined on the given predictions (e.g. AUROC with one class)."""
