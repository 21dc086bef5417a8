"""Exception hierarchy shared by all modules."""


class ResonanceLabError(Exception):
    """Base class for every error raised by this package."""


class PreconditionError(ResonanceLabError, ValueError):
    """An operation was called outside its admissible input range."""


class ResourceError(ResonanceLabError):
    """A requested size exceeds a configured hard cap."""


class InconsistencyError(ResonanceLabError):
    """Two independent evaluations of the same quantity disagree."""


class NonconformingNonlinearityError(ResonanceLabError):
    """The nonlinearity violates its declared Landesman-Lazer limits."""


class ContractionFailure(ResonanceLabError):
    """The Lyapunov-Perron iteration stopped contracting."""

    def __init__(self, message, ratios=(), bound=None):
        super().__init__(message)
        self.ratios = list(ratios)
        self.bound = bound


class CertificationError(ResonanceLabError):
    """An annulus or attractor certificate failed at a sample point."""

    def __init__(self, message, w=None, lam=None):
        super().__init__(message)
        self.w = w
        self.lam = lam


class InconclusiveError(ResonanceLabError):
    """A check could not be carried out (e.g. a trajectory left the sampled box)."""


class SaturationFailure(ResonanceLabError):
    """No saturation radius s0 was found below the search cap."""


class DivergenceError(ResonanceLabError):
    """A time integration or Newton iteration blew up."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class SingularJacobianError(ResonanceLabError):
    """Newton met a (numerically) singular Jacobian, typically near a bifurcation."""


class ExtrapolationError(InconclusiveError):
    """A manifold-graph query fell outside the sampled box."""
