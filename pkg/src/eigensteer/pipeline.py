"""End-to-end control run: embed, certify, amplify, measure once, steer.

Everything up to the measurement is deterministic, so it is computed once in
:func:`prepare` and shared across Monte Carlo trials; only the measurement
draw differs between trials.
"""

from __future__ import annotations

import enum
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from eigensteer.controllability import (
    DEFAULT_EPSILON,
    BilinearSystem,
    EigenstateSet,
    ReachabilityReport,
    analyze_reachability,
    choose_eigenstate,
    eigenstates,
)
from eigensteer.errors import NotSteerable, ValidationError
from eigensteer.grover import (
    grover_angle,
    grover_trajectory,
    optimal_iterations,
    paper_iterations,
    predicted_amplitude_after,
    uniform_state,
)
from eigensteer.statevec import QuantumState, embed, measure, num_qubits, project
from eigensteer.steering import SteeringConfig, SteeringResult, optimize_controls


class PrepMode(str, enum.Enum):
    AS_PAPER = "as_paper"
    UNIFORM_PREP = "uniform_prep"


class IterationMode(str, enum.Enum):
    PAPER_J = "paper_j"
    EXACT_OPT_J = "exact_opt_j"


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    system: BilinearSystem
    initial: QuantumState
    target: QuantumState
    prep_mode: PrepMode = PrepMode.AS_PAPER
    iteration_mode: IterationMode = IterationMode.PAPER_J
    steering: SteeringConfig = field(default_factory=SteeringConfig)
    seed: int = 0
    epsilon: float = DEFAULT_EPSILON
    cold_start: bool = False

    def __post_init__(self):
        object.__setattr__(self, "prep_mode", PrepMode(self.prep_mode))
        object.__setattr__(self, "iteration_mode", IterationMode(self.iteration_mode))
        n = self.system.n
        for name, st in (("initial", self.initial), ("target", self.target)):
            if st.dim != n:
                raise ValidationError(f"{name} state has dim {st.dim}, system has n={n}")
        if not 0 < self.epsilon < 1:
            raise ValidationError(f"epsilon must lie in (0, 1), got {self.epsilon}")

    def to_json(self) -> dict:
        return {
            "system": self.system.to_json(),
            "initial": self.initial.to_json(),
            "target": self.target.to_json(),
            "prep_mode": self.prep_mode.value,
            "iteration_mode": self.iteration_mode.value,
            "steering": self.steering.to_json(),
            "seed": self.seed,
            "epsilon": self.epsilon,
            "cold_start": self.cold_start,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ExperimentConfig":
        for key in ("system", "initial", "target"):
            if key not in data:
                raise ValidationError(f"config: missing field {key!r}")
        try:
            return cls(
                system=BilinearSystem.from_json(data["system"]),
                initial=QuantumState.from_json(data["initial"]),
                target=QuantumState.from_json(data["target"]),
                prep_mode=data.get("prep_mode", PrepMode.AS_PAPER),
                iteration_mode=data.get("iteration_mode", IterationMode.PAPER_J),
                steering=SteeringConfig.from_json(data.get("steering", {})),
                seed=int(data.get("seed", 0)),
                epsilon=float(data.get("epsilon", DEFAULT_EPSILON)),
                cold_start=bool(data.get("cold_start", False)),
            )
        except ValueError as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"config: {exc}") from None


@dataclass
class Prepared:
    """Deterministic prefix of a run: certification, eigenstate choice, amplified register."""

    eig: EigenstateSet
    report: ReachabilityReport
    register: QuantumState
    k: int
    iterations: int
    pre_state: QuantumState
    probability: float
    eq17_prediction: float
    norm_trace: list[float]
    _steering: Optional[SteeringResult] = None


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, trial]))


def prepare(cfg: ExperimentConfig) -> Prepared:
    sys = cfg.system
    eig = eigenstates(sys)
    coeffs = eig.coefficients(cfg.initial)
    register = embed(coeffs / np.linalg.norm(coeffs))
    report = analyze_reachability(sys, cfg.target, cfg.steering, cfg.epsilon, eig)
    k = choose_eigenstate(register, report)

    N = num_qubits(sys.n)
    theta = grover_angle(N)
    start = register if cfg.prep_mode is PrepMode.AS_PAPER else uniform_state(N)
    if cfg.iteration_mode is IterationMode.PAPER_J:
        j = paper_iterations(theta)
    else:
        j, _ = optimal_iterations(start, k, theta)
    trajectory = grover_trajectory(start, k, j)
    pre = trajectory[-1]
    return Prepared(
        eig=eig,
        report=report,
        register=register,
        k=k,
        iterations=j,
        pre_state=pre,
        probability=float(abs(pre.amplitudes[k - 1]) ** 2),
        eq17_prediction=predicted_amplitude_after(j, theta) ** 2,
        norm_trace=[register.norm] + [s.norm for s in trajectory],
    )


def _steer(cfg: ExperimentConfig, prep: Prepared) -> SteeringResult:
    if prep._steering is None:
        start = prep.eig.states[prep.k - 1]
        warm = None if cfg.cold_start else prep.report.entry(prep.k).verdict.certificate
        prep._steering = optimize_controls(cfg.system, start, cfg.target, cfg.steering, warm_start=warm)
    return prep._steering


@dataclass
class ExperimentResult:
    chosen_eigenstate: int
    iterations: int
    pre_measurement_probability: float
    eq17_prediction: float
    outcome: int
    collapsed_correctly: bool
    padding_outcome: bool
    steering_fidelity: Optional[float]
    success: bool
    norm_trace: list[float]
    schedule: Optional[dict] = None

    def to_json(self) -> dict:
        return asdict(self)


def run_algorithm(cfg: ExperimentConfig, rng: Optional[np.random.Generator] = None,
                  prepared: Optional[Prepared] = None) -> ExperimentResult:
    """One shot of the control algorithm; a wrong measurement outcome is a recorded failure, not retried."""
    prep = prepared or prepare(cfg)
    rng = rng if rng is not None else trial_rng(cfg.seed, 0)
    n = cfg.system.n

    outcome, collapsed = measure(prep.pre_state, rng)
    correct = outcome == prep.k
    trace = list(prep.norm_trace) + [collapsed.norm]
    fid = None
    schedule = None
    if correct:
        # the register slot k stands for eigenstate k of H0
        physical = QuantumState._trusted(prep.eig.matrix @ project(collapsed, n))
        trace.append(physical.norm)
        steered = _steer(cfg, prep)
        fid = steered.fidelity
        schedule = steered.schedule.to_json()
    return ExperimentResult(
        chosen_eigenstate=prep.k,
        iterations=prep.iterations,
        pre_measurement_probability=prep.probability,
        eq17_prediction=prep.eq17_prediction,
        outcome=outcome,
        collapsed_correctly=correct,
        padding_outcome=outcome > n,
        steering_fidelity=fid,
        success=bool(correct and fid is not None and fid >= 1 - cfg.epsilon),
        norm_trace=trace,
        schedule=schedule,
    )


@dataclass
class MonteCarloSummary:
    trials: int
    success_rate: float
    measurement_success_rate: float
    mean_pre_measurement_probability: float
    eq17_prediction: Optional[float]
    chosen_eigenstate: Optional[int]
    iterations: Optional[int]
    padding_failures: int
    errors: dict
    wall_clock_per_trial: float
    rows: list = field(default_factory=list, repr=False)

    def to_json(self, timing: bool = True) -> dict:
        out = asdict(self)
        out.pop("rows")
        if not timing:
            out.pop("wall_clock_per_trial")
        return out


def monte_carlo(cfg: ExperimentConfig, trials: int) -> MonteCarloSummary:
    """Repeat the one-shot run with per-trial seeds derived from ``(cfg.seed, trial)``."""
    if trials < 1:
        raise ValidationError(f"trials must be >= 1, got {trials}")
    t0 = time.perf_counter()
    errors: Counter = Counter()
    try:
        prep = prepare(cfg)
    except NotSteerable:
        errors["NotSteerable"] = trials
        return MonteCarloSummary(trials, 0.0, 0.0, 0.0, None, None, None, 0, dict(errors),
                                 (time.perf_counter() - t0) / trials)

    rows = []
    successes = hits = padding = 0
    for t in range(trials):
        res = run_algorithm(cfg, trial_rng(cfg.seed, t), prep)
        successes += res.success
        hits += res.collapsed_correctly
        padding += res.padding_outcome
        rows.append({"trial": t, "outcome": res.outcome, "p_pre": res.pre_measurement_probability,
                     "success": res.success})
    return MonteCarloSummary(
        trials=trials,
        success_rate=successes / trials,
        measurement_success_rate=hits / trials,
        mean_pre_measurement_probability=prep.probability,
        eq17_prediction=prep.eq17_prediction,
        chosen_eigenstate=prep.k,
        iterations=prep.iterations,
        padding_failures=padding,
        errors=dict(errors),
        wall_clock_per_trial=(time.perf_counter() - t0) / trials,
        rows=rows,
    )
