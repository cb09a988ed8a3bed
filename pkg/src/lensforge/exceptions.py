"""Exception hierarchy shared by all lensforge modules."""


class LensforgeError(Exception):
    """Base class for every error raised by the package."""


class DimensionError(LensforgeError, ValueError):
    """Array shapes are inconsistent with the declared dimension."""


class ParameterError(LensforgeError, ValueError):
    """A scalar parameter lies outside its admissible range."""


class DomainError(LensforgeError):
    """A point or path leaves the declared domain box."""


class IntegrationError(LensforgeError):
    """The implicit solve of an integrator step did not converge.

    Attributes
    ----------
    step : int
        Index of the step that failed.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class TransversalityError(LensforgeError):
    """The flow is (nearly) tangent to a section where a crossing is needed."""


class SupportError(LensforgeError):
    """A map differs from its reference outside the declared support."""


class ClosednessError(LensforgeError):
    """A one-form that must be closed is not, or its graph parametrisation
    is not invertible."""


class ConvergenceError(LensforgeError):
    """A Newton-type inner solve failed."""


class ChartError(LensforgeError):
    """A point lies outside the domain of a normal-form chart."""


class DegenerateSpectrumError(LensforgeError):
    """A Hessian has a vanishing or colliding eigenvalue."""


class TorusValidationError(LensforgeError):
    """An integrable system fails one of the periodic-torus requirements.

    Attributes
    ----------
    failures : list of str
        Names of the failed requirements.
    """

    def __init__(self, failures):
        self.failures = list(failures)
        super().__init__("torus validation failed: " + ", ".join(self.failures))


class InjectionError(LensforgeError):
    """The chaotic kick is not confined to its disc, or the disc does not fit."""


class ConfigError(LensforgeError):
    """Malformed or inconsistent run configuration."""


class ProvenanceError(LensforgeError):
    """A report mixes results produced under different configurations."""


class HypothesisError(LensforgeError):
    """An input map violates a structural hypothesis (symplecticity, level
    preservation, identity outside its support)."""


class PerturbationTooLargeError(LensforgeError):
    """The leaf map is too far from the identity for its inverse to be
    computed by a contraction (C^1 bound at least 1/2)."""


class LocalizationError(LensforgeError):
    """The localisation cube leaves the strip where H is the last momentum."""


class InversionError(ConvergenceError):
    """Newton inversion of the foliation map diverged."""
