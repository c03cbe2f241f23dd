"""Complex state vectors, the qubit-register embedding, and Born-rule measurement.

Basis indices are 1-based at every public boundary (``measure`` outcomes,
``k`` arguments); arrays are stored 0-based.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from eigensteer.errors import LeakageError, ValidationError

NORM_TOL = 1e-10
DRIFT_TOL = 1e-8
LEAKAGE_TOL = 1e-8

# bumped whenever an operation chain drifted off the unit sphere and was renormalized
_diagnostics = {"renormalizations": 0}


def renormalization_count() -> int:
    return _diagnostics["renormalizations"]


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Unit-norm amplitude vector over ``dim`` computational basis states."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        if amps.size < 1:
            raise ValidationError("a state needs at least one amplitude")
        if not np.all(np.isfinite(amps)):
            raise ValidationError("state amplitudes must be finite")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValidationError(f"state is not normalized (sum |a|^2 = {norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def _trusted(cls, amps: np.ndarray) -> "QuantumState":
        """Wrap the output of a unitary map, renormalizing if rounding drift got large."""
        amps = np.asarray(amps, dtype=np.complex128)
        norm = math.sqrt(float(np.vdot(amps, amps).real))
        if abs(norm - 1.0) > DRIFT_TOL:
            _diagnostics["renormalizations"] += 1
            amps = amps / norm
        elif abs(norm * norm - 1.0) > NORM_TOL:
            amps = amps / norm
        else:
            amps = amps.copy()
        amps = amps.reshape(-1)
        amps.setflags(write=False)
        state = object.__new__(cls)
        object.__setattr__(state, "amplitudes", amps)
        return state

    @classmethod
    def basis(cls, dim: int, k: int) -> "QuantumState":
        """The computational basis state |k> (1-based)."""
        if not 1 <= k <= dim:
            raise ValidationError(f"basis index {k} outside 1..{dim}")
        amps = np.zeros(dim, dtype=np.complex128)
        amps[k - 1] = 1.0
        return cls(amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def norm(self) -> float:
        return math.sqrt(float(np.vdot(self.amplitudes, self.amplitudes).real))

    def to_json(self) -> list[list[float]]:
        return [[float(a.real), float(a.imag)] for a in self.amplitudes]

    @classmethod
    def from_json(cls, data: Sequence[Sequence[float]]) -> "QuantumState":
        amps = pairs_to_complex(data, where="state")
        if amps.ndim != 1:
            raise ValidationError("state: expected a flat list of [re, im] pairs")
        return cls(amps)

    def __repr__(self) -> str:
        return f"QuantumState(dim={self.dim}, amplitudes={np.round(self.amplitudes, 6).tolist()})"


def pairs_to_complex(data, where: str = "value") -> np.ndarray:
    """Decode nested lists whose leaves are ``[re, im]`` pairs into a complex array."""
    try:
        arr = np.asarray(data, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: expected nested [re, im] pairs ({exc})") from None
    if arr.ndim < 1 or arr.shape[-1] != 2:
        raise ValidationError(f"{where}: innermost entries must be [re, im] pairs, got shape {arr.shape}")
    return arr[..., 0] + 1j * arr[..., 1]


def complex_to_pairs(arr) -> list:
    arr = np.asarray(arr, dtype=np.complex128)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def num_qubits(n: int) -> int:
    """Qubits needed to hold ``n`` levels: ``int(log2(n - 1)) + 1``."""
    if int(n) != n or n < 2:
        raise ValidationError(f"need at least 2 levels, got n={n!r}")
    n = int(n)
    # bit_length is the exact integer form of int(log2(n-1)) + 1
    return (n - 1).bit_length()


def embed(c: Iterable[complex]) -> QuantumState:
    """Place ``n`` physical amplitudes in the first ``n`` slots of a ``2^N`` register."""
    c = np.asarray(list(c) if not isinstance(c, np.ndarray) else c, dtype=np.complex128).reshape(-1)
    n = c.size
    big_n = num_qubits(n)
    norm = float(np.vdot(c, c).real)
    if abs(norm - 1.0) > NORM_TOL:
        raise ValidationError(f"amplitudes to embed are not normalized (sum |c|^2 = {norm!r})")
    amps = np.zeros(2**big_n, dtype=np.complex128)
    amps[:n] = c
    return QuantumState(amps)


def project(state: QuantumState, n: int) -> np.ndarray:
    """Inverse of :func:`embed`: first ``n`` amplitudes, renormalized."""
    if not 1 <= n <= state.dim:
        raise ValidationError(f"cannot project dim-{state.dim} state onto {n} levels")
    amps = state.amplitudes
    leak = float(np.sum(np.abs(amps[n:]) ** 2))
    if leak > LEAKAGE_TOL:
        raise LeakageError(f"weight {leak:.3g} outside the first {n} basis states")
    head = amps[:n]
    return head / np.linalg.norm(head)


def born_probabilities(state: QuantumState) -> np.ndarray:
    p = np.abs(state.amplitudes) ** 2
    return p / p.sum()


def measure(state: QuantumState, rng: np.random.Generator) -> tuple[int, QuantumState]:
    """Projective measurement in the computational basis.

    Returns the 1-based outcome and the collapsed basis state.
    """
    cdf = np.cumsum(np.abs(state.amplitudes) ** 2)
    # side="right" never lands on a zero-probability slot
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    if idx >= state.dim:
        idx = int(np.flatnonzero(np.abs(state.amplitudes))[-1])
    return idx + 1, QuantumState.basis(state.dim, idx + 1)


def fidelity(a: QuantumState, b: QuantumState) -> float:
    if a.dim != b.dim:
        raise ValidationError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return min(1.0, float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2))


def dumps_state(state: QuantumState) -> str:
    return json.dumps(state.to_json())


def loads_state(text: str) -> QuantumState:
    return QuantumState.from_json(json.loads(text))
