"""Exception hierarchy shared across the package."""


class VinfpoolError(Exception):
    """Base class for all errors raised by this package."""


class InfeasibleError(VinfpoolError):
    """No backup count up to the universal bound meets the target."""


class ModelError(VinfpoolError, ValueError):
    """Cascade-model parameters are invalid or produce an invalid pmf."""


class SingularChainError(VinfpoolError):
    """The CTMC has no unique stationary distribution."""


class StateSpaceTooLarge(VinfpoolError):
    pass


class ConvergenceError(VinfpoolError):
    pass


class LengthError(VinfpoolError, ValueError):
    pass


class MemberNotFound(VinfpoolError, KeyError):
    pass


class PoolInvariantError(VinfpoolError):
    """A pool state violates one of the BackupPool invariants."""


class ScenarioCapError(VinfpoolError):
    """Too many failure scenarios for exact overlap constraints."""


class NameLengthError(VinfpoolError, ValueError):
    pass


class EmbeddingInfeasible(VinfpoolError):
    pass


class CapacityError(VinfpoolError):
    pass


class ReleaseError(VinfpoolError):
    pass


class SchemaError(VinfpoolError, ValueError):
    pass


class InconsistentProblem(VinfpoolError, ValueError):
    """Pinned maps or placement rules contradict each other."""
