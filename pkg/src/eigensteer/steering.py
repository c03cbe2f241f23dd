"""Piecewise-constant propagation and a finite-difference fidelity optimizer.

Each segment applies ``exp((A + sum_i u_i B_i) dt)``, computed from the
eigendecomposition of the Hermitian matrix ``i (A + sum_i u_i B_i)`` so every
segment is unitary to rounding.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import TYPE_CHECKING, Optional

import numpy as np
import scipy.linalg

from eigensteer.errors import ValidationError
from eigensteer.statevec import QuantumState

if TYPE_CHECKING:
    from eigensteer.controllability import BilinearSystem

DEFAULT_U_MAX = 10.0


@dataclass(frozen=True, eq=False)
class ControlSchedule:
    """Control amplitudes ``amplitudes[j, i]`` held constant on segment ``j`` for ``dt``."""

    amplitudes: np.ndarray
    dt: float
    u_max: float = DEFAULT_U_MAX

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=np.float64)
        if amps.ndim == 1:
            amps = amps[:, None]
        if amps.ndim != 2 or amps.shape[0] < 1 or amps.shape[1] < 1:
            raise ValidationError(f"schedule amplitudes must be an M x m matrix, got shape {amps.shape}")
        if not np.all(np.isfinite(amps)):
            raise ValidationError("schedule amplitudes must be finite")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValidationError(f"segment duration must be positive, got dt={self.dt!r}")
        if np.max(np.abs(amps)) > self.u_max * (1 + 1e-12):
            raise ValidationError(f"amplitude {np.max(np.abs(amps)):.6g} exceeds u_max={self.u_max}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def zeros(cls, segments: int, controls: int, dt: float, u_max: float = DEFAULT_U_MAX) -> "ControlSchedule":
        return cls(np.zeros((segments, controls)), dt, u_max)

    @property
    def segments(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def controls(self) -> int:
        return self.amplitudes.shape[1]

    @property
    def total_time(self) -> float:
        return self.segments * self.dt

    def then(self, other: "ControlSchedule") -> "ControlSchedule":
        """Run ``self`` first, ``other`` afterwards."""
        if not math.isclose(self.dt, other.dt, rel_tol=0, abs_tol=1e-15) or self.controls != other.controls:
            raise ValidationError("can only concatenate schedules with equal dt and control count")
        return ControlSchedule(np.vstack([self.amplitudes, other.amplitudes]), self.dt, max(self.u_max, other.u_max))

    def to_json(self) -> dict:
        return {"M": self.segments, "dt": self.dt, "u_max": self.u_max, "amplitudes": self.amplitudes.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "ControlSchedule":
        try:
            amps = np.asarray(data["amplitudes"], dtype=np.float64)
            dt = float(data["dt"])
        except KeyError as exc:
            raise ValidationError(f"schedule: missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"schedule.amplitudes: {exc}") from None
        if "M" in data and int(data["M"]) != amps.shape[0]:
            raise ValidationError(f"schedule.M={data['M']} but amplitudes has {amps.shape[0]} rows")
        return cls(amps, dt, float(data.get("u_max", DEFAULT_U_MAX)))


@dataclass(frozen=True)
class SteeringConfig:
    segments: int = 30
    dt: float = 0.25
    restarts: int = 8
    max_iters: int = 400
    step_size: float = 1.0
    u_max: float = DEFAULT_U_MAX
    seed: int = 0
    fidelity_goal: float = 0.9999
    fd_step: float = 1e-6
    grad_tol: float = 1e-8
    init_scale: float = 2.0

    def __post_init__(self):
        if self.segments < 1 or self.restarts < 1 or self.max_iters < 0:
            raise ValidationError("segments and restarts must be >= 1, max_iters >= 0")
        if not (self.dt > 0 and self.step_size > 0 and self.u_max > 0 and self.fd_step > 0):
            raise ValidationError("dt, step_size, u_max and fd_step must be positive")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "SteeringConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"steering config: unknown fields {sorted(unknown)}")
        return cls(**data)


def _generators(sys: "BilinearSystem", amps: np.ndarray) -> np.ndarray:
    """Stack of segment generators A + sum_i u_i B_i, shape (M, n, n)."""
    return sys.A[None, :, :] + np.einsum("ji,iab->jab", amps, sys.B_stack)


def _expm_skew(gens: np.ndarray, dt: float) -> np.ndarray:
    """exp(G dt) for a stack of skew-Hermitian G via eigh of the Hermitian iG."""
    h = 1j * gens
    h = 0.5 * (h + np.conj(np.swapaxes(h, -1, -2)))
    w, v = np.linalg.eigh(h)
    phases = np.exp(-1j * w * dt)
    return np.einsum("...ab,...b,...cb->...ac", v, phases, np.conj(v))


def segment_unitaries(sys: "BilinearSystem", sched: ControlSchedule) -> np.ndarray:
    _check_controls(sys, sched.amplitudes)
    return _expm_skew(_generators(sys, sched.amplitudes), sched.dt)


def _check_controls(sys: "BilinearSystem", amps: np.ndarray) -> None:
    if amps.shape[1] != sys.m:
        raise ValidationError(f"schedule drives {amps.shape[1]} controls, system has {sys.m}")


def _forward(unitaries: np.ndarray, psi: np.ndarray) -> np.ndarray:
    states = np.empty((unitaries.shape[0] + 1, psi.size), dtype=np.complex128)
    states[0] = psi
    for j, u in enumerate(unitaries):
        states[j + 1] = u @ states[j]
    return states


def propagate(sys: "BilinearSystem", sched: ControlSchedule, psi: QuantumState) -> QuantumState:
    if psi.dim != sys.n:
        raise ValidationError(f"state dim {psi.dim} does not match system dim {sys.n}")
    out = psi.amplitudes
    for u in segment_unitaries(sys, sched):
        out = u @ out
    return QuantumState._trusted(out)


def fidelity_objective(sys: "BilinearSystem", sched: ControlSchedule, psi_start: QuantumState,
                       psi_target: QuantumState) -> float:
    final = propagate(sys, sched, psi_start)
    return min(1.0, float(abs(np.vdot(psi_target.amplitudes, final.amplitudes)) ** 2))


def verify_fidelity(sys: "BilinearSystem", sched: ControlSchedule, psi_start: QuantumState,
                    psi_target: QuantumState) -> float:
    """Re-propagate with scipy's Pade expm, independent of the eigh path used while optimizing."""
    psi = psi_start.amplitudes
    for gen in _generators(sys, sched.amplitudes):
        psi = scipy.linalg.expm(gen * sched.dt) @ psi
    psi = psi / np.linalg.norm(psi)
    return min(1.0, float(abs(np.vdot(psi_target.amplitudes, psi)) ** 2))


def _objective(sys, amps, dt, psi, target) -> float:
    u = _expm_skew(_generators(sys, amps), dt)
    out = psi
    for seg in u:
        out = seg @ out
    return float(abs(np.vdot(target, out)) ** 2)


def fd_gradient(sys: "BilinearSystem", amps: np.ndarray, dt: float, psi: np.ndarray, target: np.ndarray,
                h: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of the transfer fidelity in every amplitude.

    Perturbing u[j, i] changes only segment j, so each difference quotient is
    ``|<chi_j| exp(G_j' dt) |phi_j>|^2`` with cached forward states phi and
    backward costates chi; no full re-propagation is needed.
    """
    amps = np.asarray(amps, dtype=np.float64)
    M, m = amps.shape
    unitaries = _expm_skew(_generators(sys, amps), dt)
    fwd = _forward(unitaries, psi)
    bwd = np.empty_like(fwd)
    bwd[M] = target
    for j in range(M - 1, -1, -1):
        bwd[j] = np.conj(unitaries[j].T) @ bwd[j + 1]
    base = _generators(sys, amps)
    # perturbed generators, shape (2, M, m, n, n)
    shift = h * sys.B_stack[None, None, :, :, :]
    gens = base[None, :, None, :, :] + np.array([1.0, -1.0])[:, None, None, None, None] * shift
    u_pert = _expm_skew(gens, dt)
    overlaps = np.einsum("ja,sjiab,jb->sji", np.conj(bwd[1:]), u_pert, fwd[:-1])
    f = np.abs(overlaps) ** 2
    return (f[0] - f[1]) / (2 * h)


@dataclass
class SteeringResult:
    schedule: ControlSchedule
    fidelity: float
    iterations: int
    restarts_run: int
    history: list[float] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "schedule": self.schedule.to_json(),
            "fidelity": self.fidelity,
            "iterations": self.iterations,
            "restarts_run": self.restarts_run,
        }


def _ascend(sys, x, dt, psi, target, cfg: SteeringConfig):
    f = _objective(sys, x, dt, psi, target)
    history = [f]
    step = cfg.step_size
    iters = 0
    while iters < cfg.max_iters and f < cfg.fidelity_goal:
        iters += 1
        g = fd_gradient(sys, x, dt, psi, target, cfg.fd_step)
        if np.linalg.norm(g) < cfg.grad_tol:
            break
        improved = False
        while step > 1e-12:
            x_new = np.clip(x + step * g, -cfg.u_max, cfg.u_max)
            f_new = _objective(sys, x_new, dt, psi, target)
            if f_new > f:
                x, f = x_new, f_new
                step = min(step * 1.5, 1e4)
                improved = True
                break
            step *= 0.5
        history.append(f)
        if not improved:
            break
    return x, f, iters, history


def optimize_controls(sys: "BilinearSystem", psi_start: QuantumState, psi_target: QuantumState,
                      config: SteeringConfig = SteeringConfig(),
                      warm_start: Optional[ControlSchedule] = None) -> SteeringResult:
    """Gradient ascent on transfer fidelity from seeded random restarts.

    Restart 0 begins from the zero schedule, or from ``warm_start`` when given;
    later restarts draw uniform amplitudes in ``[-init_scale, init_scale]``.
    Restarts stop early once one reaches ``config.fidelity_goal``.
    """
    if psi_start.dim != sys.n or psi_target.dim != sys.n:
        raise ValidationError(f"states must have dim {sys.n}")
    cfg = config
    psi, target = psi_start.amplitudes, psi_target.amplitudes
    shape = (cfg.segments, sys.m)
    dt = cfg.dt
    if warm_start is not None:
        _check_controls(sys, warm_start.amplitudes)
        shape, dt = warm_start.amplitudes.shape, warm_start.dt
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)

    best = None
    total_iters = 0
    for r, ss in enumerate(seeds):
        if r == 0:
            x0 = np.zeros(shape) if warm_start is None else warm_start.amplitudes.copy()
        else:
            scale = min(cfg.init_scale, cfg.u_max)
            x0 = np.random.default_rng(ss).uniform(-scale, scale, size=shape)
        x, f, iters, history = _ascend(sys, np.clip(x0, -cfg.u_max, cfg.u_max), dt, psi, target, cfg)
        total_iters += iters
        if best is None or f > best[1]:
            best = (x, f, history)
        if best[1] >= cfg.fidelity_goal:
            break

    x, _, history = best
    sched = ControlSchedule(x, dt, cfg.u_max)
    return SteeringResult(
        schedule=sched,
        fidelity=fidelity_objective(sys, sched, psi_start, psi_target),
        iterations=total_iters,
        restarts_run=r + 1,
        history=history,
    )


def with_seed(config: SteeringConfig, seed: int) -> SteeringConfig:
    return replace(config, seed=seed)
