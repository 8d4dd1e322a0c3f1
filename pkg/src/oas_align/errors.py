"""Exception types shared across the toolkit.

Every error raised on a documented failure path derives from
:class:`OasAlignError`, so callers (and the CLI) can catch one base class
and still tell failure modes apart by subtype.
"""


class OasAlignError(Exception):
    """Base class for all toolkit errors."""


class LayoutError(OasAlignError):
    """Sequence layout is inconsistent (bad spans, out-of-range indices)."""


class DumpFormatError(OasAlignError):
    """An attention dump on disk violates the manifest/payload contract."""


class InvalidMatrixError(OasAlignError):
    """A matrix fails its invariants (non-finite, negative, wrong shape)."""


class DegenerateMatrixError(OasAlignError):
    """An alignment matrix carries no attention mass (all-zero block)."""


class CollapsedPathError(OasAlignError):
    """A path cell has zero probability, so the log loss is infinite.

    Carries the offending (row, column) so a collapsed head can be located.
    """

    def __init__(self, message: str, row: int, col: int):
        super().__init__(message)
        self.row = row
        self.col = col


class InstanceTooLargeError(OasAlignError):
    """Brute-force enumeration was asked for an instance above its guard."""
