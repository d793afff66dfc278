"""Exception hierarchy shared by all smpkit modules."""


class SMPError(Exception):
    """Base class for all errors raised by smpkit."""


class DomainError(SMPError, ValueError):
    """Argument outside the domain of a field or operation (negative time, off-table query)."""


class EvaluationError(SMPError):
    """An intensity field produced an unusable value, or a jump landed on a zero total rate."""


class ToleranceError(SMPError):
    """Adaptive quadrature hit its depth limit before meeting the requested tolerance."""


class ExplosionError(SMPError):
    """A simulated path exceeded the jump budget before reaching its horizon."""


class StepSizeError(SMPError):
    """Solver step too coarse for the intensity magnitude on the solve region."""


class ConservationError(SMPError):
    """Solver total mass drifted beyond the allowed defect."""


class GridError(SMPError, ValueError):
    """A requested time or duration is not aligned with the solver grid."""


class ConfigError(SMPError, ValueError):
    """Experiment configuration failed to parse or validate."""
