"""Exception hierarchy shared by all gradex modules."""


class GradexError(Exception):
    """Base class for every error raised by this package."""


class DomainError(GradexError, ValueError):
    """Input lies outside the domain where a function is defined."""


class SingularMetric(GradexError):
    """The chart metric is (numerically) degenerate."""


class NonFinite(GradexError):
    """A computation produced NaN or infinite values."""


class DegenerateCloud(GradexError):
    """A point cloud has no spread (e.g. all points coincide)."""


class EmbeddingFailure(GradexError):
    """Diffusion maps could not produce enough independent coordinates."""


class OutOfRange(GradexError):
    """A point lies too far from the training cloud to be extended."""


class FitFailure(GradexError):
    """Gaussian-process hyperparameter fitting failed on every restart."""


class ChartFailure(GradexError):
    """A chart could not be built during a driver run."""


class IntegrationBlowup(GradexError):
    """A relaxation trajectory left the admissible region."""


class StepsizeUnderflow(GradexError):
    """Continuation step size dropped below its minimum."""


class MaxIterations(GradexError):
    """An iterative method exhausted its iteration budget."""


class ConfigError(GradexError, ValueError):
    """Invalid or unknown configuration key/value."""
