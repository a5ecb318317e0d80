"""Exception families, each mapped to a distinct CLI exit code."""


class PwampcError(Exception):
    """Base class for all package errors."""

    exit_code = 1
    family = "error"


class ValidationError(PwampcError):
    """Bad configuration, file schema, or argument values."""

    exit_code = 2
    family = "validation"


class SynthesisError(PwampcError):
    """Controller synthesis failed (stabilizability, gamma search, ...)."""

    exit_code = 3
    family = "synthesis"


class EmptyTerminalSetError(SynthesisError):
    """Terminal-set construction produced an empty set."""

    exit_code = 4
    family = "empty terminal set"


class SimulationFault(PwampcError):
    """Closed-loop simulation hit a non-finite state or controller fault."""

    exit_code = 5
    family = "simulation"


class NumericError(PwampcError):
    """Solver-level numerical failure, distinct from model infeasibility."""

    exit_code = 6
    family = "numeric"


class IdentificationError(PwampcError):
    """Friction identification could not detect motion onset."""

    exit_code = 7
    family = "identification"
