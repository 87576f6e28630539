"""Exception hierarchy raised by the library and mapped to exit codes by the commands."""


class IsolateError(Exception):
    """Base class for all library errors."""


class MissingEvent(IsolateError):
    """A history was asked for an event it does not have (or may not see)."""


class DomainError(IsolateError, ValueError):
    """An argument lies outside the domain of a formula."""


class SchemaError(IsolateError):
    """Input data does not follow the file schema."""


class ConfigError(IsolateError):
    """The run configuration is invalid or self-contradictory."""


class EmptyPool(IsolateError):
    """A distance was requested over an empty pool."""


class UnresolvableCovariate(IsolateError):
    """A covariate name cannot be resolved on a history view."""


class InfeasibleStratum(IsolateError):
    """No treated unit of a stratum can be matched."""


class InfeasibleDesign(IsolateError):
    """The whole design contains no matched set."""


class TooLarge(IsolateError):
    """An exhaustive computation exceeds its size limit."""


class UnknownVariable(IsolateError):
    """A balance variable is unknown to the cohort."""


class MissingOutcome(IsolateError):
    """An outcome is absent for a member of a matched set."""


class EmptyDesign(IsolateError):
    """Inference was requested on a design without matched sets."""


class BracketFailure(IsolateError):
    """An estimating function does not change sign over the search bracket."""


class ZeroDoseEffect(BracketFailure):
    """The dose is unaffected by treatment, so the effect ratio is undefined."""


class BalanceViolation(IsolateError):
    """An exactly matched variable is not perfectly balanced."""
