"""Bilinear system model, dynamical Lie algebra closure, and reachability verdicts."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from eigensteer.errors import NotSteerable, ValidationError
from eigensteer.statevec import QuantumState, complex_to_pairs, pairs_to_complex
from eigensteer.steering import (
    ControlSchedule,
    SteeringConfig,
    optimize_controls,
    verify_fidelity,
    with_seed,
)

SKEW_TOL = 1e-10
LIE_TOL = 1e-9
RANK_TOL = 1e-8
DEGENERACY_TOL = 1e-8
CERTIFICATE_TOL = 1e-6
DEFAULT_EPSILON = 1e-3


def _skew_violation(mat: np.ndarray) -> tuple[float, tuple[int, int]]:
    dev = np.abs(mat + mat.conj().T)
    idx = np.unravel_index(int(np.argmax(dev)), dev.shape)
    return float(dev[idx]), (int(idx[0]), int(idx[1]))


@dataclass(frozen=True, eq=False)
class BilinearSystem:
    """``d|psi>/dt = (A + sum_i u_i(t) B_i) |psi>`` with skew-Hermitian generators (hbar = 1)."""

    A: np.ndarray
    B: tuple

    def __post_init__(self):
        A = np.array(self.A, dtype=np.complex128)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValidationError(f"A must be square, got shape {A.shape}")
        n = A.shape[0]
        if n < 2:
            raise ValidationError("system needs n >= 2 levels")
        Bs = [np.array(b, dtype=np.complex128) for b in self.B]
        if not Bs:
            raise ValidationError("system needs at least one control generator")
        for name, mat in [("A", A)] + [(f"B[{i}]", b) for i, b in enumerate(Bs)]:
            if mat.shape != (n, n):
                raise ValidationError(f"{name} has shape {mat.shape}, expected {(n, n)}")
            if not np.all(np.isfinite(mat)):
                raise ValidationError(f"{name} has non-finite entries")
            dev, (r, c) = _skew_violation(mat)
            if dev > SKEW_TOL:
                raise ValidationError(
                    f"{name} is not skew-Hermitian: |{name}[{r}][{c}] + conj({name}[{c}][{r}])| = {dev:.3g}"
                )
        for mat in [A, *Bs]:
            mat.setflags(write=False)
        stack = np.stack(Bs)
        stack.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", tuple(Bs))
        object.__setattr__(self, "B_stack", stack)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return len(self.B)

    @property
    def drift_hamiltonian(self) -> np.ndarray:
        return 1j * self.A

    def to_json(self) -> dict:
        return {"n": self.n, "A": complex_to_pairs(self.A), "B": [complex_to_pairs(b) for b in self.B]}

    @classmethod
    def from_json(cls, data: dict) -> "BilinearSystem":
        if not isinstance(data, dict):
            raise ValidationError("system: expected a JSON object with fields n, A, B")
        for key in ("A", "B"):
            if key not in data:
                raise ValidationError(f"system: missing field {key!r}")
        A = pairs_to_complex(data["A"], where="system.A")
        if not isinstance(data["B"], list):
            raise ValidationError("system.B: expected a list of matrices")
        Bs = [pairs_to_complex(b, where=f"system.B[{i}]") for i, b in enumerate(data["B"])]
        if "n" in data and A.ndim == 2 and int(data["n"]) != A.shape[0]:
            raise ValidationError(f"system.n={data['n']} but A is {A.shape[0]}x{A.shape[1]}")
        try:
            return cls(A, tuple(Bs))
        except ValidationError as exc:
            raise ValidationError(f"system.{exc}") from None


@dataclass(frozen=True, eq=False)
class EigenstateSet:
    states: tuple
    energies: np.ndarray
    degenerate: bool

    @property
    def matrix(self) -> np.ndarray:
        """Unitary whose columns are the eigenstates."""
        return np.column_stack([s.amplitudes for s in self.states])

    def coefficients(self, psi: QuantumState) -> np.ndarray:
        """Expansion coefficients c_i = <psi_i^e|psi>."""
        return self.matrix.conj().T @ psi.amplitudes


def eigenstates(sys: BilinearSystem) -> EigenstateSet:
    """Eigenbasis of H0 = iA, ascending energies.

    Each vector is rephased so its largest-magnitude component is real
    positive; degenerate spectra get whatever basis the solver returns.
    """
    h0 = sys.drift_hamiltonian
    h0 = 0.5 * (h0 + h0.conj().T)
    w, v = np.linalg.eigh(h0)
    states = []
    for col in v.T:
        pivot = col[int(np.argmax(np.abs(col)))]
        col = col * (abs(pivot) / pivot)
        states.append(QuantumState._trusted(col))
    scale = max(1.0, float(np.max(np.abs(w))))
    degenerate = bool(np.any(np.diff(w) < DEGENERACY_TOL * scale))
    return EigenstateSet(states=tuple(states), energies=w, degenerate=degenerate)


def _hs(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.vdot(x, y).real)


@dataclass(frozen=True, eq=False)
class LieAlgebraBasis:
    generators: np.ndarray  # (dim, n, n), HS-orthonormal
    tol: float = LIE_TOL

    @property
    def dim(self) -> int:
        return self.generators.shape[0]

    def residual(self, mat: np.ndarray) -> float:
        """HS norm of the part of ``mat`` outside the span."""
        coeffs = np.einsum("kab,ab->k", self.generators.conj(), mat).real
        return float(np.linalg.norm(mat - np.einsum("k,kab->ab", coeffs, self.generators)))


def _orthogonal_part(basis: list[np.ndarray], mat: np.ndarray) -> np.ndarray:
    v = mat
    for _ in range(2):
        for b in basis:
            v = v - _hs(b, v) * b
    return v


def _try_append(basis: list[np.ndarray], mat: np.ndarray, tol: float) -> bool:
    norm = np.linalg.norm(mat)
    if norm < tol:
        return False
    v = _orthogonal_part(basis, mat / norm)
    r = np.linalg.norm(v)
    if r < tol:
        return False
    basis.append(v / r)
    return True


def generate_lie_algebra(sys: BilinearSystem, tol: float = LIE_TOL) -> LieAlgebraBasis:
    """Smallest real Lie algebra containing A, B_1..B_m, as an HS-orthonormal basis."""
    if not 0 < tol <= 1e-4:
        raise ValidationError(f"closure tolerance must lie in (0, 1e-4], got {tol}")
    n = sys.n
    basis: list[np.ndarray] = []
    for g in (sys.A, *sys.B):
        _try_append(basis, g, tol)
    processed = 0
    while processed < len(basis) and len(basis) < n * n:
        x = basis[processed]
        for y in basis[:processed]:
            _try_append(basis, x @ y - y @ x, tol)
            if len(basis) == n * n:
                break
        processed += 1
    gens = np.stack(basis) if basis else np.zeros((0, n, n), dtype=np.complex128)
    return LieAlgebraBasis(gens, tol)


def closure_defect(basis: LieAlgebraBasis) -> float:
    """Largest out-of-span residual over one full commutator pass (relative to the commutator norm)."""
    worst = 0.0
    g = basis.generators
    for a in range(basis.dim):
        for b in range(a):
            c = g[a] @ g[b] - g[b] @ g[a]
            norm = np.linalg.norm(c)
            if norm < basis.tol:
                continue
            worst = max(worst, basis.residual(c / norm))
    return worst


class ControlClass(str, enum.Enum):
    FULL_UN = "FullUn"
    FULL_SUN = "FullSUn"
    NOT_FULL = "NotFull"


@dataclass(frozen=True)
class Classification:
    kind: ControlClass
    dim: int

    def __str__(self) -> str:
        if self.kind is ControlClass.NOT_FULL:
            return f"NotFull({self.dim})"
        return self.kind.value

    @property
    def full(self) -> bool:
        return self.kind is not ControlClass.NOT_FULL


def is_completely_controllable(sys: BilinearSystem, tol: float = LIE_TOL,
                               basis: Optional[LieAlgebraBasis] = None) -> Classification:
    basis = basis or generate_lie_algebra(sys, tol)
    n2 = sys.n**2
    if basis.dim == n2:
        return Classification(ControlClass.FULL_UN, basis.dim)
    traceless = all(abs(np.trace(g)) < max(tol, SKEW_TOL) for g in (sys.A, *sys.B))
    if basis.dim == n2 - 1 and traceless:
        return Classification(ControlClass.FULL_SUN, basis.dim)
    return Classification(ControlClass.NOT_FULL, basis.dim)


def orbit_dimension(sys: BilinearSystem, psi: QuantumState, basis: Optional[LieAlgebraBasis] = None,
                    rank_tol: float = RANK_TOL) -> int:
    """Real rank of the tangent vectors {X psi : X in the dynamical Lie algebra}."""
    if psi.dim != sys.n:
        raise ValidationError(f"state dim {psi.dim} does not match system dim {sys.n}")
    basis = basis or generate_lie_algebra(sys)
    if basis.dim == 0:
        return 0
    tangents = basis.generators @ psi.amplitudes
    real = np.hstack([tangents.real, tangents.imag])
    s = np.linalg.svd(real, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rank_tol * s[0]))


@dataclass(frozen=True)
class Verdict:
    reachable: bool
    fidelity: float
    certificate: Optional[ControlSchedule] = None

    @property
    def label(self) -> str:
        return "Reachable" if self.reachable else "Unknown"

    def to_json(self) -> dict:
        out = {"verdict": self.label, "fidelity": self.fidelity}
        if self.certificate is not None:
            out["certificate"] = self.certificate.to_json()
        return out


def reachable_membership(sys: BilinearSystem, source_index: int, target: QuantumState,
                         budget: SteeringConfig = SteeringConfig(), epsilon: float = DEFAULT_EPSILON,
                         eig: Optional[EigenstateSet] = None) -> Verdict:
    """Try to certify that ``target`` lies in the reachable set of eigenstate ``source_index`` (1-based).

    Sound but incomplete: a failed search yields Unknown, never Unreachable.
    A Reachable verdict's schedule is re-propagated through an independent
    matrix exponential and must reproduce the claimed fidelity.
    """
    eig = eig or eigenstates(sys)
    if not 1 <= source_index <= sys.n:
        raise ValidationError(f"eigenstate index {source_index} outside 1..{sys.n}")
    if target.dim != sys.n:
        raise ValidationError(f"target dim {target.dim} does not match system dim {sys.n}")
    source = eig.states[source_index - 1]
    result = optimize_controls(sys, source, target, budget)
    if result.fidelity < 1 - epsilon:
        return Verdict(False, result.fidelity)
    checked = verify_fidelity(sys, result.schedule, source, target)
    if abs(checked - result.fidelity) > CERTIFICATE_TOL or checked < 1 - epsilon:
        return Verdict(False, checked)
    return Verdict(True, result.fidelity, result.schedule)


@dataclass(frozen=True)
class ReachabilityEntry:
    index: int
    orbit_dimension: int
    verdict: Verdict

    def to_json(self) -> dict:
        return {"eigenstate": self.index, "orbit_dimension": self.orbit_dimension, **self.verdict.to_json()}


@dataclass(frozen=True)
class ReachabilityReport:
    entries: tuple = field(default_factory=tuple)

    @property
    def reachable_indices(self) -> list[int]:
        return [e.index for e in self.entries if e.verdict.reachable]

    def entry(self, index: int) -> ReachabilityEntry:
        for e in self.entries:
            if e.index == index:
                return e
        raise KeyError(index)

    def to_json(self) -> list:
        return [e.to_json() for e in self.entries]


def analyze_reachability(sys: BilinearSystem, target: QuantumState, budget: SteeringConfig = SteeringConfig(),
                         epsilon: float = DEFAULT_EPSILON, eig: Optional[EigenstateSet] = None,
                         basis: Optional[LieAlgebraBasis] = None) -> ReachabilityReport:
    """Reachability verdict for ``target`` from every eigenstate of H0."""
    eig = eig or eigenstates(sys)
    basis = basis or generate_lie_algebra(sys)
    entries = []
    for k in range(1, sys.n + 1):
        verdict = reachable_membership(sys, k, target, with_seed(budget, budget.seed + k - 1), epsilon, eig)
        entries.append(ReachabilityEntry(k, orbit_dimension(sys, eig.states[k - 1], basis), verdict))
    return ReachabilityReport(tuple(entries))


def choose_eigenstate(psi0_embedded: QuantumState, report: ReachabilityReport) -> int:
    """Among certified eigenstates, the one with the largest |amplitude| in the register.

    Ties within 1e-12 go to the smallest index.
    """
    candidates = sorted(report.reachable_indices)
    if not candidates:
        raise NotSteerable("target lies outside every certified eigenstate-from reachable set")
    mags = np.abs(psi0_embedded.amplitudes)
    top = max(mags[k - 1] for k in candidates)
    return next(k for k in candidates if mags[k - 1] >= top - 1e-12)


def random_skew_hermitian(n: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    h = 0.5 * (z + z.conj().T)
    return -1j * scale * h / np.linalg.norm(h) * np.sqrt(n)


def random_controllable_system(n: int, rng: np.random.Generator, controls: int = 1,
                               max_tries: int = 100) -> BilinearSystem:
    """Rejection-sample random generators until the Lie algebra is u(n) or su(n)."""
    for _ in range(max_tries):
        sys = BilinearSystem(random_skew_hermitian(n, rng),
                             tuple(random_skew_hermitian(n, rng) for _ in range(controls)))
        if is_completely_controllable(sys).full:
            return sys
    raise RuntimeError(f"no controllable {n}-level system after {max_tries} draws")


def system_from_matrices(A: Sequence, B: Sequence) -> BilinearSystem:
    return BilinearSystem(np.asarray(A, dtype=np.complex128), tuple(np.asarray(b, dtype=np.complex128) for b in B))
