"""Exception hierarchy shared across the package."""


class GrasslandError(Exception):
    """Base class for all errors raised by grassland."""


class ContractViolation(GrasslandError, ValueError):
    """A precondition of an operation was not met by the caller."""


class HorizonError(GrasslandError, IndexError):
    """A tick or action count exceeds the scenario horizon."""


class GenerationError(GrasslandError):
    """Rejection sampling gave up before satisfying a constraint."""


class ParseError(GrasslandError, ValueError):
    """A file, frame or document could not be decoded."""


class IntegrityError(GrasslandError):
    """A decoded instance violates its invariants (e.g. tampered ground truth)."""


class TransportError(GrasslandError):
    """A reasoner call failed after all retries."""


class ConfigError(GrasslandError):
    """Invalid run configuration."""


class ScoringError(GrasslandError):
    """Run records are missing or inconsistent with the instance set."""
