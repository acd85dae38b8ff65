"""Exception types shared across the package."""


class SplinePdeError(Exception):
    """Base class for all package errors."""


class ConfigError(SplinePdeError, ValueError):
    """Invalid static configuration (spline orders, grid dims, ...)."""


class DerivativeOrderError(SplinePdeError, ValueError):
    """Requested derivative order exceeds what the spline order supports."""


class SamplingError(SplinePdeError, ValueError):
    """Evaluation point outside the grid or the current time slab."""


class LayoutError(SplinePdeError, TypeError):
    """Operation called on a state with the wrong field layout."""


class SamplingDomainError(SplinePdeError, ValueError):
    """Residual requested at a point that is not inside the fluid region."""


class DomainError(SplinePdeError, ValueError):
    """Degenerate domain (e.g. no fluid cells at all)."""


class ShapeError(SplinePdeError, ValueError):
    """Tensor shapes do not match the model/domain contract."""


class GeometryError(SplinePdeError, ValueError):
    """Invalid measurement geometry (e.g. force circle clipped by other solids)."""


class TrainingError(SplinePdeError, RuntimeError):
    """Non-finite loss or other unrecoverable failure during training."""


class RolloutError(SplinePdeError, RuntimeError):
    """Non-finite fields encountered while unrolling a simulation."""

    def __init__(self, msg, step=None):
        super().__init__(msg)
        self.step = step
