import json
import math

import numpy as np
import pytest

from conftest import block_system, rng_state
from eigensteer.controllability import eigenstates, random_controllable_system
from eigensteer.errors import NotSteerable, ValidationError
from eigensteer.pipeline import (
    ExperimentConfig,
    IterationMode,
    PrepMode,
    monte_carlo,
    prepare,
    run_algorithm,
    trial_rng,
)
from eigensteer.statevec import QuantumState
from eigensteer.steering import SteeringConfig

R2 = 1 / math.sqrt(2)
FAST = SteeringConfig(restarts=3, max_iters=200)


def block_cfg(n, initial, **kw):
    sys = block_system(n)
    target = np.zeros(n, dtype=complex)
    target[:2] = [R2, 1j * R2]
    return ExperimentConfig(system=sys, initial=QuantumState(initial), target=QuantumState(target),
                            steering=FAST, **kw)


def basis(n, k):
    v = np.zeros(n)
    v[k - 1] = 1
    return v


def test_config_validation():
    with pytest.raises(ValidationError):
        block_cfg(3, basis(4, 1))
    with pytest.raises(ValueError):
        block_cfg(3, basis(3, 1), prep_mode="sometimes")
    cfg = block_cfg(3, basis(3, 1), prep_mode="uniform_prep")
    assert cfg.prep_mode is PrepMode.UNIFORM_PREP
    back = ExperimentConfig.from_json(json.loads(json.dumps(cfg.to_json())))
    assert back.to_json() == cfg.to_json()


def test_initial_already_eigenstate_exact_opt():
    cfg = block_cfg(3, basis(3, 2), iteration_mode=IterationMode.EXACT_OPT_J)
    res = run_algorithm(cfg)
    assert res.chosen_eigenstate == 2
    assert res.iterations == 0
    assert res.pre_measurement_probability == 1.0
    assert res.outcome == 2 and res.success
    assert res.steering_fidelity >= 1 - cfg.epsilon


def test_four_level_uniform_prep_is_certain():
    rng = np.random.default_rng(3)
    sys = random_controllable_system(4, rng)
    cfg = ExperimentConfig(system=sys, initial=QuantumState(rng_state(rng, 4)),
                           target=QuantumState(rng_state(rng, 4)), prep_mode="uniform_prep", steering=FAST)
    prep = prepare(cfg)
    assert prep.iterations == 1
    assert abs(prep.probability - 1) < 1e-12
    for t in range(50):
        res = run_algorithm(cfg, trial_rng(cfg.seed, t), prep)
        assert res.outcome == prep.k and res.success


def test_diagonal_target_outside_is_not_steerable(diagonal_system):
    cfg = ExperimentConfig(system=diagonal_system, initial=QuantumState([R2, R2]),
                           target=QuantumState([R2, R2]), steering=SteeringConfig(restarts=2, max_iters=50))
    with pytest.raises(NotSteerable):
        run_algorithm(cfg)
    summary = monte_carlo(cfg, 5)
    assert summary.errors == {"NotSteerable": 5}
    assert summary.success_rate == 0


def test_chooses_largest_certified_amplitude():
    init = np.array([0.3, 0.8, math.sqrt(1 - 0.73)])
    prep = prepare(block_cfg(3, init))
    # eigenstate 3 carries the most weight but cannot reach the target
    assert prep.report.reachable_indices == [1, 2]
    assert prep.k == 2


def test_padding_outcomes_are_recorded_failures():
    # start on eigenstate 3, k = 1 by tie-break; one Grover round leaves 1/4 weight per slot
    cfg = block_cfg(3, basis(3, 3))
    prep = prepare(cfg)
    assert prep.k == 1 and prep.iterations == 1
    assert abs(prep.probability - 0.25) < 1e-14
    T = 4000
    summary = monte_carlo(cfg, T)
    sigma = math.sqrt(0.25 * 0.75 / T)
    assert abs(summary.measurement_success_rate - 0.25) < 3 * sigma
    assert abs(summary.padding_failures / T - 0.25) < 3 * sigma
    assert summary.success_rate == summary.measurement_success_rate


def test_mode_dominance():
    rng = np.random.default_rng(17)
    for n in (3, 5):
        for _ in range(3):
            init = rng_state(rng, n)
            default = prepare(block_cfg(n, init))
            exact = prepare(block_cfg(n, init, iteration_mode="exact_opt_j"))
            assert exact.probability >= default.probability - 1e-15


def test_determinism_and_one_shot():
    cfg = block_cfg(5, basis(5, 4), prep_mode="uniform_prep", seed=77)
    a, b = run_algorithm(cfg), run_algorithm(cfg)
    assert json.dumps(a.to_json()) == json.dumps(b.to_json())
    # one measurement per trial: exactly one post-measurement norm after the Grover trace
    assert len(a.norm_trace) in (len(prepare(cfg).norm_trace) + 1, len(prepare(cfg).norm_trace) + 2)
    s1, s2 = monte_carlo(cfg, 200), monte_carlo(cfg, 200)
    assert s1.rows == s2.rows
    assert s1.to_json(timing=False) == s2.to_json(timing=False)


def test_norm_trace_stays_unit():
    res = run_algorithm(block_cfg(5, rng_state(np.random.default_rng(2), 5), prep_mode="as_paper"))
    assert all(abs(x - 1) < 1e-10 for x in res.norm_trace)
