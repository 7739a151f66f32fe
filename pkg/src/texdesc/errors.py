"""Exception types shared across the package.

Invalid arguments raise plain ``ValueError``; the classes below refine it
where callers need to tell failure modes apart.
"""


class FormatError(ValueError):
    """A file decodes, but not in a format this package accepts."""


class DegenerateDataError(ValueError):
    """The data carries no usable spread (e.g. every point identical)."""


class UndefinedMetricError(ValueError):
    """A metric is undefined for the given input (e.g. AP with no positives)."""


class ConfigMismatchError(ValueError):
    """An artifact was produced under a different configuration hash."""
