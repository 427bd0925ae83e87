"""Exception types shared across the library."""


class CrowdsigError(Exception):
    """Base class for all crowdsig errors."""


class SchemaError(CrowdsigError, ValueError):
    """Input file is malformed: missing headers, unparseable key fields."""


class DuplicateKeyError(SchemaError):
    """Repeated (year, quarter, forecaster) key in an input file."""


class EmptyPanelError(CrowdsigError, ValueError):
    """An operation produced or received a panel with no usable observations."""


class DomainError(CrowdsigError, ValueError):
    """A parameter lies outside its validity region."""


class UnbalancedPanelError(CrowdsigError, ValueError):
    """Operation requires a balanced panel (no missing cells)."""


class CombinatorialLimitError(CrowdsigError, ValueError):
    """Exact enumeration would exceed the subset-count guard."""


class IncompleteMomentsError(CrowdsigError, ValueError):
    """A required sample moment is missing (e.g. a zero-overlap pair)."""


class DegenerateBenchmarkError(CrowdsigError, ValueError):
    """The k=1 benchmark used for scaling is zero."""


class EstimationError(CrowdsigError, RuntimeError):
    """Estimator failed to produce a usable result."""
