class ValidationError(ValueError):
    """Input violates a documented contract (normalization, shape, skew-Hermiticity)."""


class LeakageError(ValidationError):
    """Amplitude found in the padding slots of a qubit register."""


class NotSteerable(RuntimeError):
    """No eigenstate carries a certified route to the target state."""
