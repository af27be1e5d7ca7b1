"""Exception hierarchy. Every error carries a short machine-readable category."""


class DivineError(Exception):
    category = "error"


class SchemaError(DivineError, ValueError):
    category = "schema"


class SplitError(DivineError, ValueError):
    category = "split"


class ConvergenceError(DivineError, RuntimeError):
    category = "convergence"


class EmptyCellError(DivineError, ValueError):
    """A (group, label) confusion cell has no members."""

    category = "empty-cell"

    def __init__(self, group, label):
        self.group = group
        self.label = label
        super().__init__(f"no points with sensitive={group!r} and label={label:+d}")


class SelectionError(DivineError, ValueError):
    category = "selection"


class ConfigError(DivineError, ValueError):
    category = "config"
