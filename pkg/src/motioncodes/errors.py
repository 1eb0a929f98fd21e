"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes; library code raises them directly.
"""


class MotionCodesError(Exception):
    """Base class for every error raised by this package."""


class StructuralError(MotionCodesError):
    """Shapes, joint counts, frame counts, or tree structure do not line up."""


class ConfigurationError(MotionCodesError):
    """A parameter, config value, or id is out of its documented domain."""


class NumericError(MotionCodesError):
    """A non-finite value appeared where finite math was required."""


class ParseError(MotionCodesError):
    """A text container (clip file, config, script, manifest) is malformed."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc += f" [{path}"
            loc += f":{line}]" if line is not None else "]"
        super().__init__(message + loc)
        self.path = path
        self.line = line


class CheckpointError(MotionCodesError):
    """A checkpoint container is missing, truncated, or inconsistent."""


class UndefinedResultError(ConfigurationError):
    """The requested loss or metric is undefined on the given inputs
    (empty clip list, no valid anchors, single-label batch)."""
