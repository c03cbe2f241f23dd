"""Command-line entry point: ``eigensteer {analyze,grover,steer,run,montecarlo}``.

Every command prints one JSON document ``{"manifest": ..., "result": ...}``.
The ``result`` body is a pure function of the inputs; timestamps and timing
live only in the manifest.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import sys
from dataclasses import fields
from pathlib import Path
from typing import Any, Optional

import numpy as np

from eigensteer import __version__
from eigensteer.controllability import (
    DEFAULT_EPSILON,
    LIE_TOL,
    RANK_TOL,
    BilinearSystem,
    analyze_reachability,
    eigenstates,
    generate_lie_algebra,
    is_completely_controllable,
    orbit_dimension,
)
from eigensteer.errors import NotSteerable, ValidationError
from eigensteer.grover import amplify, uniform_state
from eigensteer.pipeline import ExperimentConfig, IterationMode, PrepMode, monte_carlo, run_algorithm
from eigensteer.statevec import QuantumState, embed, num_qubits
from eigensteer.steering import ControlSchedule, SteeringConfig, optimize_controls, verify_fidelity

EXIT_OK, EXIT_USAGE, EXIT_INPUT = 0, 2, 3

_STEERING_HELP = {
    "segments": "piecewise-constant segments M",
    "dt": "segment duration",
    "restarts": "random restarts of the optimizer",
    "max_iters": "gradient-ascent iterations per restart",
    "step_size": "initial ascent step size",
    "u_max": "control amplitude bound",
    "fidelity_goal": "stop a restart once this fidelity is reached",
    "fd_step": "finite-difference step",
    "grad_tol": "stop when the gradient norm drops below this",
    "init_scale": "half-width of the uniform random initial amplitudes",
}


class _Inputs:
    """Reads JSON inputs and records a digest of every file touched."""

    def __init__(self):
        self.digests: dict[str, str] = {}

    def load(self, path: str) -> Any:
        p = Path(path)
        try:
            raw = p.read_bytes()
        except OSError as exc:
            raise ValidationError(f"{path}: cannot read ({exc.strerror})") from None
        self.digests[str(path)] = hashlib.sha256(raw).hexdigest()
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None

    def system(self, path: str) -> BilinearSystem:
        data = self.load(path)
        if isinstance(data, dict) and "manifest" in data:
            data = data["manifest"].get("config", {}).get("system", data)
        try:
            return BilinearSystem.from_json(data)
        except ValidationError as exc:
            raise ValidationError(f"{path}: {exc}") from None

    def state(self, path: str) -> QuantumState:
        data = self.load(path)
        if isinstance(data, dict):
            data = data.get("result", data)
            for key in ("final_state", "state", "amplitudes"):
                if isinstance(data, dict) and key in data:
                    data = data[key]
                    break
        try:
            return QuantumState.from_json(data)
        except ValidationError as exc:
            raise ValidationError(f"{path}: {exc}") from None

    def schedule(self, path: str) -> ControlSchedule:
        data = self.load(path)
        if isinstance(data, dict):
            data = data.get("result", data)
            if isinstance(data, dict) and "schedule" in data:
                data = data["schedule"]
        if not isinstance(data, dict):
            raise ValidationError(f"{path}: expected a schedule object")
        try:
            return ControlSchedule.from_json(data)
        except ValidationError as exc:
            raise ValidationError(f"{path}: {exc}") from None

    def config(self, path: str) -> dict:
        data = self.load(path)
        if isinstance(data, dict) and "manifest" in data:
            data = data["manifest"].get("config", {})
        if not isinstance(data, dict):
            raise ValidationError(f"{path}: expected an experiment config object")
        return data


def _add_steering_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("steering optimizer")
    for f in fields(SteeringConfig):
        if f.name == "seed":
            continue
        flag = "--" + f.name.replace("_", "-")
        if f.name == "segments":
            flag = "--segments"
        g.add_argument(flag, dest=f.name, type=type(f.default), default=None,
                       help=f"{_STEERING_HELP[f.name]} (default: {f.default})")


def _steering_from(args, base: Optional[SteeringConfig] = None) -> SteeringConfig:
    base = base or SteeringConfig()
    values = base.to_json()
    for f in fields(SteeringConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return SteeringConfig(**values)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eigensteer",
        description="Controllability analysis, Grover amplification and measurement-assisted steering "
                    "for finite-dimensional bilinear quantum systems.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--output", help="write JSON here instead of stdout (default: stdout)")

    p = sub.add_parser("analyze", help="Lie-algebra dimension, classification and orbit dimensions")
    p.add_argument("--system", required=True, help="system JSON {n, A, B}")
    p.add_argument("--lie-tol", type=float, default=LIE_TOL, help=f"commutator-closure tolerance (default: {LIE_TOL})")
    p.add_argument("--rank-tol", type=float, default=RANK_TOL,
                   help=f"relative singular-value cutoff (default: {RANK_TOL})")
    p.add_argument("--target", help="optional target state JSON; adds a reachability report")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON,
                   help=f"certificate infidelity allowance (default: {DEFAULT_EPSILON})")
    p.add_argument("--seed", type=int, default=0, help="optimizer seed (default: 0)")
    _add_steering_flags(p)
    common(p)

    p = sub.add_parser("grover", help="Grover plan and exact amplitudes on a 2^N register")
    p.add_argument("--qubits", type=int, required=True, help="register size N")
    p.add_argument("--target", type=int, required=True, help="1-based target basis index k")
    p.add_argument("--iterations", type=int, default=None, help="override j (default: int(pi/4 theta))")
    p.add_argument("--initial", default="uniform", help="'uniform' or 'file:<path>' (default: uniform)")
    common(p)

    p = sub.add_parser("steer", help="optimize a control schedule from an eigenstate to a target")
    p.add_argument("--system", required=True, help="system JSON")
    p.add_argument("--from-eigenstate", type=int, required=True, help="1-based eigenstate index (ascending energy)")
    p.add_argument("--target", required=True, help="target state JSON")
    p.add_argument("--seed", type=int, default=0, help="optimizer seed (default: 0)")
    p.add_argument("--warm-start-file", help="schedule JSON (or a previous steer output) to start from")
    _add_steering_flags(p)
    common(p)

    for name, desc in (("run", "one shot of the control algorithm"),
                       ("montecarlo", "repeat the control algorithm over seeded trials")):
        p = sub.add_parser(name, help=desc)
        p.add_argument("--config-file", help="experiment config JSON, or a previous run/montecarlo output")
        p.add_argument("--system", help="system JSON")
        p.add_argument("--initial", help="initial state JSON (n amplitudes, system basis)")
        p.add_argument("--target", help="target state JSON")
        p.add_argument("--prep-mode", choices=[m.value for m in PrepMode], default=None,
                       help="register preparation before amplification (default: as_paper)")
        p.add_argument("--iteration-mode", choices=[m.value for m in IterationMode], default=None,
                       help="Grover iteration count rule (default: paper_j)")
        p.add_argument("--seed", type=int, default=None, help="master seed (default: 0)")
        p.add_argument("--epsilon", type=float, default=None,
                       help=f"steering success allowance (default: {DEFAULT_EPSILON})")
        p.add_argument("--cold-start", action="store_true", default=None,
                       help="do not warm-start steering from the reachability certificate")
        _add_steering_flags(p)
        if name == "montecarlo":
            p.add_argument("--trials", type=int, required=True, help="number of trials T")
            p.add_argument("--csv", help="write per-trial rows (trial, outcome, p_pre, success) here")
        common(p)
    return parser


def _manifest(command: str, config: dict, inputs: _Inputs, seed) -> dict:
    return {
        "tool": "eigensteer",
        "version": __version__,
        "subcommand": command,
        "config": config,
        "inputs": dict(sorted(inputs.digests.items())),
        "seed": seed,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def _cmd_analyze(args, inputs):
    system = inputs.system(args.system)
    basis = generate_lie_algebra(system, args.lie_tol)
    cls = is_completely_controllable(system, args.lie_tol, basis)
    eig = eigenstates(system)
    result = {
        "n": system.n,
        "lie_dim": basis.dim,
        "classification": str(cls),
        "energies": eig.energies.tolist(),
        "degenerate": eig.degenerate,
        "orbit_dimension": [orbit_dimension(system, s, basis, args.rank_tol) for s in eig.states],
    }
    steering = _steering_from(args, SteeringConfig(seed=args.seed))
    config = {"system": system.to_json(), "lie_tol": args.lie_tol, "rank_tol": args.rank_tol}
    if args.target:
        target = inputs.state(args.target)
        report = analyze_reachability(system, target, steering, args.epsilon, eig, basis)
        result["reachability"] = report.to_json()
        config.update(target=target.to_json(), epsilon=args.epsilon, steering=steering.to_json())
    return config, args.seed, result


def _cmd_grover(args, inputs):
    N = args.qubits
    if N < 1:
        raise ValidationError(f"--qubits must be >= 1, got {N}")
    if args.initial == "uniform":
        state = uniform_state(N)
    elif args.initial.startswith("file:"):
        state = inputs.state(args.initial[5:])
        if state.dim != 2**N:
            if num_qubits(state.dim) != N:
                raise ValidationError(f"{args.initial[5:]}: dim {state.dim} does not fit {N} qubits")
            state = embed(state.amplitudes)
    else:
        raise ValidationError(f"--initial must be 'uniform' or 'file:<path>', got {args.initial!r}")
    if args.iterations is not None and args.iterations < 0:
        raise ValidationError("--iterations must be >= 0")
    outcome = amplify(state, args.target, args.iterations)
    config = {"qubits": N, "target": args.target, "iterations": args.iterations, "initial": args.initial}
    return config, None, outcome.to_json()


def _cmd_steer(args, inputs):
    system = inputs.system(args.system)
    target = inputs.state(args.target)
    if not 1 <= args.from_eigenstate <= system.n:
        raise ValidationError(f"--from-eigenstate must lie in 1..{system.n}")
    warm = inputs.schedule(args.warm_start_file) if args.warm_start_file else None
    steering = _steering_from(args, SteeringConfig(seed=args.seed))
    source = eigenstates(system).states[args.from_eigenstate - 1]
    res = optimize_controls(system, source, target, steering, warm_start=warm)
    result = res.to_json()
    result["verified_fidelity"] = verify_fidelity(system, res.schedule, source, target)
    config = {"system": system.to_json(), "from_eigenstate": args.from_eigenstate,
              "target": target.to_json(), "steering": steering.to_json()}
    return config, args.seed, result


def _experiment_config(args, inputs) -> ExperimentConfig:
    data = inputs.config(args.config_file) if args.config_file else {}
    data = dict(data)
    if args.system:
        data["system"] = inputs.system(args.system).to_json()
    if args.initial:
        data["initial"] = inputs.state(args.initial).to_json()
    if args.target:
        data["target"] = inputs.state(args.target).to_json()
    for key in ("prep_mode", "iteration_mode", "seed", "epsilon", "cold_start"):
        v = getattr(args, key)
        if v is not None:
            data[key] = v
    missing = [k for k in ("system", "initial", "target") if k not in data]
    if missing:
        raise ValidationError(f"missing inputs: {', '.join('--' + m for m in missing)} (or --config-file)")
    base = SteeringConfig.from_json(data.get("steering", {}))
    data["steering"] = _steering_from(args, base).to_json()
    return ExperimentConfig.from_json(data)


def _cmd_run(args, inputs):
    cfg = _experiment_config(args, inputs)
    try:
        result = run_algorithm(cfg).to_json()
        result["status"] = "completed"
    except NotSteerable as exc:
        result = {"status": "NotSteerable", "message": str(exc)}
    return cfg.to_json(), cfg.seed, result


def _cmd_montecarlo(args, inputs):
    if args.trials < 1:
        raise ValidationError("--trials must be >= 1")
    cfg = _experiment_config(args, inputs)
    summary = monte_carlo(cfg, args.trials)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["trial", "outcome", "p_pre", "success"])
            writer.writeheader()
            writer.writerows(summary.rows)
    config = cfg.to_json()
    config["trials"] = args.trials
    return config, cfg.seed, summary.to_json(timing=False), {"wall_clock_per_trial": summary.wall_clock_per_trial}


_COMMANDS = {
    "analyze": _cmd_analyze,
    "grover": _cmd_grover,
    "steer": _cmd_steer,
    "run": _cmd_run,
    "montecarlo": _cmd_montecarlo,
}


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    inputs = _Inputs()
    try:
        out = _COMMANDS[args.command](args, inputs)
    except ValidationError as exc:
        print(f"eigensteer {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    config, seed, result, *extra = out
    manifest = _manifest(args.command, config, inputs, seed)
    if extra:
        manifest.update(extra[0])
    text = json.dumps({"manifest": manifest, "result": result}, indent=2, sort_keys=True, default=_jsonable)
    if args.output:
        Path(args.output).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


if __name__ == "__main__":
    sys.exit(main())
