"""Exception types raised across the toolkit.

Every error is a subclass of WardfairError so callers can catch the whole
family with one except clause; the leaf classes match the failure modes of
the individual pipeline stages.
"""


class WardfairError(Exception):
    """Base class for all toolkit errors."""


# --- dataset ingestion / encoding ---

class MissingColumn(WardfairError):
    """A declared column is absent from every supplied file (or a plot input)."""


class DuplicateKey(WardfairError):
    """A (ward, year) key occurs more than once within a single source table."""


class EmptyJoin(WardfairError):
    """Joining and cleaning the source tables left no usable rows."""


class DegenerateRange(WardfairError):
    """All values equal where a spread is required (min-max scaling, plots)."""


class EmptySide(WardfairError):
    """A train/test split produced an empty side."""


# --- model training / metrics ---

class TooFewSamples(WardfairError):
    """Not enough rows for the requested operation."""


class NonFiniteFeature(WardfairError):
    """NaN or infinity found in a feature matrix or target."""


class DimensionMismatch(WardfairError):
    """Matrix shapes are incompatible with the fitted model or each other."""


class LengthMismatch(WardfairError):
    """Paired vectors have different lengths."""


class EmptyInput(WardfairError):
    """An operation received zero-length input."""


class ConstantTarget(WardfairError):
    """R-squared is undefined for a constant target vector."""


# --- fairness / mitigation ---

class DegenerateFeature(WardfairError):
    """A feature has no spread, so no midpoint threshold exists."""


class EmptyGroup(WardfairError):
    """One side of a low/high group assignment has no samples."""


class SingletonGroup(WardfairError):
    """The minority group has fewer than two samples (interpolation needs pairs)."""


class InvalidRequest(WardfairError):
    """A request is malformed (empty feature list, negative target, ...)."""


class MismatchedProvenance(WardfairError):
    """Two reports being combined come from different model/test runs."""


# --- harness ---

class EmptyCell(WardfairError):
    """A summary was requested for a cell with no run results."""


class InvalidConfig(WardfairError):
    """An experiment configuration fails validation."""
