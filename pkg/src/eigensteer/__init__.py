"""Measurement-assisted control of eigenstate-controllable bilinear quantum systems."""

__version__ = "0.1.0"

from eigensteer.errors import LeakageError, NotSteerable, ValidationError
from eigensteer.statevec import QuantumState

__all__ = ["LeakageError", "NotSteerable", "QuantumState", "ValidationError", "__version__"]
