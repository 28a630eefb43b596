"""Exception taxonomy shared by all hazardsim layers."""


class HazardSimError(Exception):
    """Base class for every error raised by this package."""


class MissingFile(HazardSimError):
    """A referenced bundle, document or log file does not exist."""


class SchemaViolation(HazardSimError):
    """A document or record does not match its published schema."""


class InvariantViolation(HazardSimError):
    """A structurally valid document breaks a semantic invariant."""


class InvalidScenario(HazardSimError):
    """A synthesis scenario is unusable (bad trajectory, bad duration...)."""


class OutOfOrderFrame(HazardSimError):
    """A frame arrived at or before the last processed index for its node."""


class Unreachable(HazardSimError):
    """A device cannot be reached from the mesh coordinator."""


class DomainError(HazardSimError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class ClipMismatch(HazardSimError):
    """A run log references frames or nodes unknown to the given clip."""


class EmptyCell(HazardSimError):
    """A report aggregation cell has no clip results behind it."""


class RunActive(HazardSimError):
    """A new run was requested while one is still in progress."""


class ClipLoadError(HazardSimError):
    """A clip referenced by a run spec could not be loaded."""


class TopologyUnreachable(HazardSimError):
    """The mesh topology for a run is not fully connected."""


class ValidationError(HazardSimError):
    """A control-message payload failed validation."""


class BufferOverrun(HazardSimError):
    """An event subscriber fell behind its bounded buffer and was dropped."""


class NegativeDelayWarning(UserWarning):
    """Latency compensation drove an alert delay below zero."""
