"""Exception types shared across the package."""


class FewprobeError(Exception):
    """Base class for all errors raised by this package."""


class ZeroVector(FewprobeError):
    """A vector with (near-)zero norm cannot be normalized."""


class DimMismatch(FewprobeError):
    """Operands have incompatible dimensions."""


class EmptySet(FewprobeError):
    """An operation received an empty collection where data is required."""


class NotPositiveDefinite(FewprobeError):
    """Cholesky factorization failed: the matrix is not positive-definite.

    ``pivot_index`` is the index of the first failing pivot.
    """

    def __init__(self, pivot_index: int, pivot: float, hint: str = ""):
        self.pivot_index = pivot_index
        self.pivot = pivot
        msg = f"pivot {pivot_index} is {pivot:.3e} (<= threshold)"
        if hint:
            msg += f"; {hint}"
        super().__init__(msg)


class NoConvergence(FewprobeError):
    """An iterative method hit its iteration cap without converging."""


class NotSeparable(FewprobeError):
    """No strictly separating hyperplane was found for the support set."""

    def __init__(self, updates: int):
        self.updates = updates
        super().__init__(
            f"perceptron did not converge after {updates} updates; "
            "the support set is not linearly separable"
        )


class LengthMismatch(FewprobeError):
    """Fingerprints of different lengths cannot be compared."""


class KTooLarge(FewprobeError):
    """k exceeds the number of available support samples."""


class DegenerateLabels(FewprobeError):
    """A scored query needs at least one positive and one negative label."""


class EmptyTask(FewprobeError):
    """Task preparation removed every sample of a task."""


class InsufficientSamples(FewprobeError):
    """A task lacks enough samples of a class for the requested episode."""

    def __init__(self, task_id: str, label: int, needed: int, available: int):
        self.task_id = task_id
        self.label = label
        super().__init__(
            f"task {task_id!r}: class {label} has {available} samples, "
            f"episode needs {needed}"
        )
