"""Exception types shared across the package."""


class ToposculptError(Exception):
    """Base class for all errors raised by this package."""


class VolumeRoleError(ToposculptError):
    """A volume was passed to an operation that requires a different role."""


class VolumeFormatError(ToposculptError):
    """A volume file is malformed, truncated, or uses an unsupported feature."""


class PhantomPlacementError(ToposculptError):
    """Phantom geometry could not be placed within the configured bounds."""


class RefinementNumericalError(ToposculptError):
    """A refinement step produced a non-finite loss or gradient."""

    def __init__(self, message, iteration=None, term=None, trajectory=None):
        super().__init__(message)
        self.iteration = iteration
        self.term = term
        self.trajectory = trajectory if trajectory is not None else []
