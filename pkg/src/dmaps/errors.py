"""Exception types raised across the package."""


class DegenerateRowError(ValueError):
    """A kernel row has zero mass, so no positive weight exists for it."""

    def __init__(self, indices, message=None):
        self.indices = [int(i) for i in indices]
        shown = self.indices[:20]
        more = "" if len(self.indices) <= 20 else f" (and {len(self.indices) - 20} more)"
        super().__init__(message or f"zero kernel row sums at indices {shown}{more}")


class NumericalFailureError(ArithmeticError):
    """An iteration produced a non-positive or non-finite intermediate."""


class AssemblyError(ValueError):
    """Weights and kernel matrix do not produce a Markov matrix."""


class ModelInvalidError(ValueError):
    """A density model is not strictly positive or not normalisable."""


class SamplingEfficiencyError(RuntimeError):
    """Rejection sampling would accept too small a fraction of proposals."""


class ResolutionError(ValueError):
    """A Fourier discretisation does not resolve its input function."""


class IllConditionedError(ValueError):
    """An out-of-sample extension would divide by a tiny eigenvalue."""


class ConfigError(ValueError):
    """An experiment configuration is incomplete or inconsistent."""
