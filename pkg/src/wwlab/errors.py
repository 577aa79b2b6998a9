"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An argument lies outside its admissible range."""


class InvalidMultiplierError(ValueError):
    """A Fourier multiplier is not finite on the frequency lattice."""


class GridMismatchError(ValueError):
    """Operands live on different grids."""


class UnsupportedOrderError(ValueError):
    """Requested symbolic-calculus order is not implemented."""


class DiffeomorphismError(RuntimeError):
    """The straightening map fails to be a diffeomorphism."""

    def __init__(self, message, min_dz_rho=None):
        super().__init__(message)
        self.min_dz_rho = min_dz_rho


class SingularSystemError(RuntimeError):
    """The strip elliptic solve did not converge."""

    def __init__(self, message, info=None, residual=None):
        super().__init__(message)
        self.info = info
        self.residual = residual


class SymbolEllipticityError(ValueError):
    """A symbol radicand is negative somewhere on the lattice."""


class TaylorSignError(RuntimeError):
    """The Taylor coefficient is not positive."""

    def __init__(self, message, min_a=None, state=None):
        super().__init__(message)
        self.min_a = min_a
        self.state = state


class BlowUpError(RuntimeError):
    """Non-finite values appeared during time integration."""

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class SamplingError(ValueError):
    """Snapshots are missing or too coarse for a time derivative."""


class ConfigError(ValueError):
    """An experiment configuration is malformed."""
