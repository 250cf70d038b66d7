"""Exception hierarchy shared across the package."""


class CgnfError(Exception):
    """Base class for all package errors."""


class DagError(CgnfError, ValueError):
    pass


class CycleDetected(DagError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("cycle detected: " + " -> ".join(self.cycle))


class DuplicateName(DagError):
    pass


class SelfLoop(DagError):
    pass


class LabelOutOfRange(CgnfError, ValueError):
    pass


class ShapeMismatch(CgnfError, ValueError):
    pass


class InsufficientData(CgnfError, ValueError):
    pass


class SingularDesign(CgnfError):
    pass


class EmptyStratum(CgnfError):
    pass


class StateSpaceTooLarge(CgnfError):
    pass


class MissingSidecar(CgnfError):
    pass


class NumericalError(CgnfError, ArithmeticError):
    """Raised when a computation produces unusable numbers."""


class NonFiniteValue(NumericalError):
    pass


class BracketingFailed(NumericalError):
    pass


class DivergedLoss(NumericalError):
    pass
