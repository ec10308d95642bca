"""Exception hierarchy for the fuzzyseg package."""


class FuzzySegError(Exception):
    """Base class for all domain errors raised by this package."""


class UnsupportedFormatError(FuzzySegError):
    """Image data is not an 8-bit grayscale PGM (P2/P5) or PNG."""


class EmptyWindowError(FuzzySegError):
    """A clipped window contains fewer than two pixels."""


class PatchTooLargeError(FuzzySegError):
    """Requested patch size exceeds the image dimensions."""


class LayoutGapError(FuzzySegError):
    """Mosaic placements leave part of the canvas uncovered."""


class LayoutOverlapError(FuzzySegError):
    """Mosaic placements overlap each other."""


class NonPositiveStdError(FuzzySegError):
    """A Gaussian bump was requested with a non-positive spread."""


class UndefinedDivergenceError(FuzzySegError):
    """KL divergence is undefined: the reference puts zero mass where the source does not."""


class NoAdjacentPairsError(FuzzySegError):
    """A seed region induces no edge-adjacent pixel pairs."""


class NoSeedsError(FuzzySegError):
    """An operation that needs seed spels received none."""


class OutOfRangeError(FuzzySegError):
    """A value fell outside its documented range."""


class ConflictingSeedsError(FuzzySegError):
    """The same spel is a seed of two different objects."""


class EmptySeedsError(FuzzySegError):
    """An object has an empty seed set."""


class BadObjectIdError(FuzzySegError):
    """Object id outside 1..M."""


class UnsegmentedSpelError(FuzzySegError):
    """Crisp labeling was requested but some spel has zero connectedness."""


class EmptyPatchError(FuzzySegError):
    """A patch histogram has zero total count."""


class DegenerateMatrixError(FuzzySegError):
    """Distance matrix contains non-finite entries."""


class BadKError(FuzzySegError):
    """Requested number of clusters is out of range."""


class EmptyClassError(FuzzySegError):
    """A cluster assignment contains an empty class."""


class SamplingExhaustedError(FuzzySegError):
    """Seed sampling failed to find a collision-free point."""


class DimensionMismatchError(FuzzySegError):
    """Two maps being compared have different dimensions."""


class PaletteTooSmallError(FuzzySegError):
    """Rendering palette has fewer colors than objects."""
