"""Exception hierarchy shared across the package."""


class FlowNovelError(Exception):
    """Base class for all package errors."""


class ContractError(FlowNovelError, ValueError):
    """A precondition of an operation was violated."""


class DimensionError(ContractError):
    """Operand shapes do not agree."""


class DomainError(FlowNovelError, ValueError):
    """A math function was evaluated outside its domain (log of <= 0, division by 0)."""


class DataError(FlowNovelError):
    """Input data is malformed or degenerate."""


class DecompositionError(FlowNovelError):
    """Cholesky factorization failed even after jitter escalation."""


class NumericalError(FlowNovelError):
    """A flow produced non-finite values."""

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class DivergenceError(NumericalError):
    """ODE integration or training blew up."""

    def __init__(self, message, t=None, epoch=None, batch=None):
        super().__init__(message)
        self.t = t
        self.epoch = epoch
        self.batch = batch
