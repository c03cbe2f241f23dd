"""Grover reflections and iteration-count formulas.

The iteration is ``U_G = U_s U_k``: sign flip on the target slot first, then
inversion about the mean. Both reflections act in O(dim) vector form.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from eigensteer.errors import ValidationError
from eigensteer.statevec import QuantumState

# guards int(pi / 4 theta) against landing a hair below an exact integer (N = 1 gives 0.999...)
_INT_GUARD = 1e-9
DIVERGENCE_TOL = 1e-6


def _qubits_of(dim: int) -> int:
    if dim < 2 or dim & (dim - 1):
        raise ValidationError(f"register dimension {dim} is not a power of two >= 2")
    return dim.bit_length() - 1


def _check_index(k: int, dim: int) -> None:
    if int(k) != k or not 1 <= k <= dim:
        raise ValidationError(f"target index {k!r} outside 1..{dim}")


def uniform_state(N: int) -> QuantumState:
    if N < 1:
        raise ValidationError(f"need at least one qubit, got N={N}")
    dim = 2**N
    return QuantumState(np.full(dim, 1.0 / math.sqrt(dim), dtype=np.complex128))


def apply_us(state: QuantumState) -> QuantumState:
    """Inversion about the mean: ``a_i -> 2<a> - a_i``."""
    _qubits_of(state.dim)
    a = state.amplitudes
    return QuantumState._trusted(2.0 * a.mean() - a)


def apply_uk(state: QuantumState, k: int) -> QuantumState:
    _check_index(k, state.dim)
    a = state.amplitudes.copy()
    a[k - 1] = -a[k - 1]
    return QuantumState._trusted(a)


def grover_iterate(state: QuantumState, k: int, j: int) -> QuantumState:
    _qubits_of(state.dim)
    _check_index(k, state.dim)
    if j < 0:
        raise ValidationError(f"iteration count must be >= 0, got {j}")
    for _ in range(j):
        state = apply_us(apply_uk(state, k))
    return state


def grover_trajectory(state: QuantumState, k: int, j: int) -> list[QuantumState]:
    """States after 0, 1, ..., j iterations."""
    out = [state]
    for _ in range(j):
        out.append(apply_us(apply_uk(out[-1], k)))
    return out


def grover_angle(N: int) -> float:
    """theta with sin^2(theta) = 2^-N."""
    if N < 1:
        raise ValidationError(f"need at least one qubit, got N={N}")
    return math.asin(2.0 ** (-N / 2))


def paper_iterations(theta: float) -> int:
    return int(math.pi / (4.0 * theta) + _INT_GUARD)


def predicted_amplitude_after(j: int, theta: float) -> float:
    if not 0.0 < theta <= math.pi / 2:
        raise ValidationError(f"theta must lie in (0, pi/2], got {theta!r}")
    return math.sin((2 * j + 1) * theta)


@dataclass(frozen=True)
class GroverPlan:
    N: int
    k: int
    theta: float
    iterations: int
    predicted_amplitude: float

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "GroverPlan":
        try:
            return cls(
                N=int(data["N"]),
                k=int(data["k"]),
                theta=float(data["theta"]),
                iterations=int(data["iterations"]),
                predicted_amplitude=float(data["predicted_amplitude"]),
            )
        except KeyError as exc:
            raise ValidationError(f"plan: missing field {exc.args[0]!r}") from None


def make_plan(N: int, k: int) -> GroverPlan:
    theta = grover_angle(N)
    _check_index(k, 2**N)
    j = paper_iterations(theta)
    return GroverPlan(N=N, k=k, theta=theta, iterations=j, predicted_amplitude=predicted_amplitude_after(j, theta))


def optimal_iterations(state: QuantumState, k: int, theta: float | None = None) -> tuple[int, float]:
    """Scan j over 0..2*int(pi/4theta)+2 and return the j maximizing |a_k|^2.

    Ties go to the smallest j. Returns ``(j, probability)``.
    """
    N = _qubits_of(state.dim)
    if theta is None:
        theta = grover_angle(N)
    j_max = 2 * paper_iterations(theta) + 2
    probs = [abs(s.amplitudes[k - 1]) ** 2 for s in grover_trajectory(state, k, j_max)]
    best = int(np.argmax(probs))
    return best, float(probs[best])


@dataclass(frozen=True)
class GroverOutcome:
    """Exact post-iteration statistics next to the closed-form prediction."""

    plan: GroverPlan
    iterations: int
    final_state: QuantumState
    probability: float
    predicted_probability: float

    @property
    def diverges(self) -> bool:
        return abs(self.probability - self.predicted_probability) > DIVERGENCE_TOL

    def to_json(self) -> dict:
        return {
            "plan": self.plan.to_json(),
            "iterations_used": self.iterations,
            "probability_at_target": self.probability,
            "predicted_probability": self.predicted_probability,
            "diverges_from_prediction": self.diverges,
            "final_state": self.final_state.to_json(),
        }


def amplify(state: QuantumState, k: int, iterations: int | None = None) -> GroverOutcome:
    """Run the Grover iteration on ``state`` with the plan's j unless overridden."""
    plan = make_plan(_qubits_of(state.dim), k)
    j = plan.iterations if iterations is None else iterations
    final = grover_iterate(state, k, j)
    return GroverOutcome(
        plan=plan,
        iterations=j,
        final_state=final,
        probability=float(abs(final.amplitudes[k - 1]) ** 2),
        predicted_probability=predicted_amplitude_after(j, plan.theta) ** 2,
    )
