"""Exception hierarchy shared across the package.

Every domain-specific failure derives from :class:`WmirError` so callers
(CLI, HTTP service) can map library failures to exit codes / status codes
without enumerating individual types.
"""


class WmirError(Exception):
    """Base class for all errors raised by this package."""


# --- report validation -------------------------------------------------------

class SchemaError(WmirError):
    """A structured record is malformed: missing/unknown field or bad enum value."""


class DuplicateRegionError(SchemaError):
    """A report lists the same anatomical region more than once."""


# --- embedding index ---------------------------------------------------------

class ZeroVectorError(WmirError):
    """A vector with zero L2 norm cannot be normalized."""


class DimensionMismatchError(WmirError):
    """Vector dimensionality disagrees with the index dimension."""


class EmptySearchSpaceError(WmirError):
    """No eligible exams exist for the requested search."""


class FormatError(WmirError):
    """A persisted index or head file is corrupt or has the wrong format."""


# --- retrieval engine --------------------------------------------------------

class UnknownExamError(WmirError):
    """A query referenced an exam id not present in the index."""


class InvalidQueryError(WmirError):
    """A retrieval query violates its own invariants (bad mode/region/k)."""


class MissingQueryRegionError(WmirError):
    """The query has no embedding for the requested region."""


class EmptyResultError(WmirError):
    """An aggregation was asked to operate on an empty result list."""


# --- contrastive training ----------------------------------------------------

class ShapeError(WmirError):
    """Array arguments have inconsistent shapes."""


class NonFiniteError(WmirError):
    """An array argument contains NaN or infinity."""


class ConfigError(WmirError):
    """A configuration value is out of its legal range."""


# --- evaluation --------------------------------------------------------------

class EmptyRunError(WmirError):
    """A metric was asked to evaluate a run with no queries."""


class NoRelevantError(WmirError):
    """A query has no relevant item, so rank-based metrics are undefined."""


class EmptySampleError(WmirError):
    """Bootstrap resampling needs at least one sample."""


class SingleClassError(WmirError):
    """A ranking metric needs both positive and negative labels present."""
