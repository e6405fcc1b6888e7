"""Exception hierarchy shared by all modules."""


class ModelError(Exception):
    """Base class for errors raised by the physical and protocol models."""


class LayoutError(ModelError, ValueError):
    """Invalid array geometry."""


class NearFieldError(ModelError, ValueError):
    """Evaluation point lies inside the near field of a transducer."""

    def __init__(self, message, transducer_index=None, grid_index=None):
        super().__init__(message)
        self.transducer_index = transducer_index
        self.grid_index = grid_index


class GridAlignmentError(ModelError, ValueError):
    """Field grid is not parallel to the absorbing fabric surface."""


class StabilityError(ModelError, ValueError):
    """Time step exceeds the explicit-scheme stability bound."""


class CalibrationError(ModelError):
    """Calibration did not converge or was given an impossible target."""


class InsufficientPowerError(CalibrationError):
    """Target threshold time cannot be reached even with full absorption."""


class ProtocolError(ModelError, ValueError):
    """Malformed trial plan, record set or aggregation input."""
