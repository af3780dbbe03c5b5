"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Invalid argument (bad sizes, parity, ranges, length mismatch)."""


class BiasError(ParameterError):
    """Bias parameters do not satisfy the strict ordering a bound requires."""


class GenerationError(RuntimeError):
    """Random graph generation exhausted its restart budget."""


class StructureError(RuntimeError):
    """Graph or chain structure unsuitable for the requested computation."""


class CapacityError(ValueError):
    """Problem size exceeds what an exhaustive method can handle."""


class ConsistencyError(RuntimeError):
    """Internal invariant violated; indicates a bug or impossible input."""


class SpectralError(RuntimeError):
    """Eigensolver did not reach the requested tolerance.

    The best estimate found so far is kept on the exception so callers can
    decide whether it is good enough.
    """

    def __init__(self, message, estimate, residual, iterations):
        super().__init__(message)
        self.estimate = estimate
        self.residual = residual
        self.iterations = iterations
