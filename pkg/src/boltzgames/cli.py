"""Command-line front end: solve, rollout, irl, bench, replay.

Every run that receives --out writes a manifest.json recording the resolved
configuration, the artifact names, and a replayable argument list; `replay`
re-executes a manifest into a fresh directory. Artifacts are byte-stable
across replays except for wall-clock fields (the wall_ms trace column and
the manifest timing entry).

Exit codes: 0 success (including unconverged solves, which are flagged in
the manifest), 2 usage errors, 3 invalid input (bad game files, shape
mismatches, malformed trajectories), 4 internal errors.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import itertools
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .envs import ENVIRONMENTS, build_environment, detector_for
from .finite_horizon import FiniteHorizonSolver
from .forward_backward import ForwardBackwardSolver, SimplifiedGame
from .game import (
    GameFormatError,
    GameValidationError,
    MarkovGame,
    load_game,
    validate_game,
)
from .infinite_horizon import InfiniteHorizonSolver
from .irl import OnlineRewardLearner, TrajectoryLog
from .rollout import (
    RolloutConfig,
    run_rollouts,
    run_simplified_rollouts,
    score_summary,
)
from .trace import write_stage_traces_csv, write_trace_csv

SOLVERS = ("mge-i", "mge-f", "mge-fb")
MANIFEST_FORMAT = "boltzgames-manifest"
POLICIES_FORMAT = "boltzgames-policies"


# ---------------------------------------------------------------------------
# argparse plumbing
# ---------------------------------------------------------------------------

def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _nonneg_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return value


def _nonneg_float(text):
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def _unit_float(text):
    value = float(text)
    if not 0 < value <= 1:
        raise argparse.ArgumentTypeError(f"must be in (0, 1], got {text}")
    return value


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma list of numbers: {text}")


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma list of ints: {text}")


def _add_game_flags(sub, with_initial=False, with_mu=True):
    sub.add_argument("--game", required=True,
                     help="built-in environment name or game JSON file")
    sub.add_argument("--beta", type=_positive_float, default=None,
                     help="override the game's rationality parameter")
    sub.add_argument("--horizon", type=_positive_int, default=None,
                     help="override the game's horizon")
    if with_initial:
        sub.add_argument("--initial", type=_int_list, default=None,
                         metavar="N0,N1,..",
                         help="pursuit-3p initial nodes (h1,h2,p)")
    if with_mu:
        sub.add_argument("--mu", type=_float_list, default=None,
                         metavar="W[,W..]",
                         help="driving-scene occupancy penalty weight(s)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boltzgames",
        description="Solvers, rollouts, and reward learning for Markov games "
                    "with Boltzmann mixed strategies.",
    )
    parser.add_argument("--version", action="version",
                        version=f"boltzgames {__version__}")
    subs = parser.add_subparsers(dest="subcommand")

    solve = subs.add_parser("solve", help="solve a game and write artifacts")
    _add_game_flags(solve, with_initial=True)
    solve.add_argument("--solver", required=True, choices=SOLVERS)
    solve.add_argument("--epsilon", type=_positive_float, default=None,
                       help="stop tolerance (default per solver)")
    solve.add_argument("--alpha", type=_unit_float, default=1.0,
                       help="stage damping factor (mge-f)")
    solve.add_argument("--max-iters", type=_positive_int, default=None,
                       help="iteration cap (mge-i sweeps, mge-f inner, "
                            "mge-fb outer; default per solver)")
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--init", choices=("zeros", "random"), default="zeros")
    solve.add_argument("--init-scale", type=_positive_float, default=1.0)
    solve.add_argument("--sweep-mode", choices=("asymmetric", "jacobi"),
                       default="asymmetric", help="mge-i sweep order")
    solve.add_argument("--cold-start", action="store_true",
                       help="mge-f: re-initialize each stage instead of "
                            "warm-starting from the next one")
    solve.add_argument("--out", default=None, help="artifact directory")
    solve.set_defaults(func=cmd_solve)

    rollout = subs.add_parser("rollout", help="execute solved policies")
    _add_game_flags(rollout)
    rollout.add_argument("--policies", required=True,
                         help="policies.json (or the solve output directory)")
    rollout.add_argument("--episodes", type=_positive_int, default=10)
    rollout.add_argument("--exec", dest="execution",
                         choices=("argmax", "sample"), default="argmax")
    rollout.add_argument("--seed", type=int, default=0)
    rollout.add_argument("--initial", type=_int_list, default=None,
                         metavar="C0,C1,..",
                         help="fixed initial state components (default: "
                              "draw from the game's initial distribution)")
    rollout.add_argument("--out", default=None, help="artifact directory")
    rollout.set_defaults(func=cmd_rollout)

    irl = subs.add_parser(
        "irl", help="fit opponents' reward weights from demonstrations"
    )
    _add_game_flags(irl)
    irl.add_argument("--trajectories", required=True,
                     help="demonstration CSV (episode,tau,x*,a* columns)")
    irl.add_argument("--observer", type=_nonneg_int, default=0,
                     help="the learning agent (its own reward is known)")
    irl.add_argument("--steps", type=_nonneg_int, default=100)
    irl.add_argument("--rho", type=_positive_float, default=0.05,
                     help="gradient step size")
    irl.add_argument("--ball-radius", type=_positive_float, default=10.0)
    irl.add_argument("--features", default="indicator",
                     help="'indicator', 'rewards', or a .npz file with "
                          "arrays agent0..agent{M-1}")
    irl.add_argument("--forward-model", choices=("finite", "recursion"),
                     default="finite")
    irl.add_argument("--gap-tol", type=_nonneg_float, default=0.0,
                     help="stop early when all gap norms fall below this")
    irl.add_argument("--epsilon", type=_positive_float, default=1e-8,
                     help="forward-solve tolerance")
    irl.add_argument("--alpha", type=_unit_float, default=1.0,
                     help="forward-solve damping (finite model)")
    irl.add_argument("--out", default=None, help="artifact directory")
    irl.set_defaults(func=cmd_irl)

    bench = subs.add_parser(
        "bench", help="run a solver over a parameter grid, one trace CSV"
    )
    _add_game_flags(bench, with_initial=True)
    bench.add_argument("--solver", required=True, choices=SOLVERS)
    bench.add_argument("--alpha", type=_float_list, default=[1.0],
                       metavar="A[,A..]", help="mge-f damping grid")
    bench.add_argument("--betas", type=_float_list, default=None,
                       metavar="B[,B..]", help="rationality grid "
                       "(default: the game's own beta)")
    bench.add_argument("--seeds", type=_int_list, default=[0],
                       metavar="S[,S..]", help="random-init seed grid")
    bench.add_argument("--epsilon", type=_positive_float, default=None)
    bench.add_argument("--max-iters", type=_positive_int, default=None)
    bench.add_argument("--out", required=True, help="artifact directory")
    bench.set_defaults(func=cmd_bench)

    replay = subs.add_parser(
        "replay", help="re-run a recorded manifest into a new directory"
    )
    replay.add_argument("--manifest", required=True)
    replay.add_argument("--out", required=True)
    replay.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return int(args.func(args))
    except (GameFormatError, GameValidationError, FileNotFoundError,
            ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - last-resort CLI boundary
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------

def _py(value):
    """Recursively convert numpy scalars/arrays for JSON serialization."""
    if isinstance(value, dict):
        return {str(k): _py(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_py(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def _json_dump(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(_py(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_built_game(args, builder_initial=None):
    """Resolve --game plus override flags into a validated game."""
    name = args.game
    beta = getattr(args, "beta", None)
    horizon = getattr(args, "horizon", None)
    mu = getattr(args, "mu", None)
    if name in ENVIRONMENTS:
        overrides = {}
        if beta is not None:
            overrides["beta"] = beta
        if horizon is not None:
            overrides["horizon"] = horizon
        if builder_initial is not None:
            if name != "pursuit-3p":
                raise ValueError("--initial only applies to pursuit-3p")
            overrides["initial"] = tuple(builder_initial)
        if mu is not None:
            if name != "driving":
                raise ValueError("--mu only applies to the driving scene")
            overrides["mu"] = mu[0] if len(mu) == 1 else tuple(mu)
        return build_environment(name, **overrides)
    if builder_initial is not None or mu is not None:
        raise ValueError(
            "--initial/--mu only apply to built-in environments"
        )
    game = load_game(name)
    if beta is not None:
        game = game.with_beta(beta)
    if horizon is not None:
        if game.horizon is None:
            raise ValueError("--horizon only applies to finite-horizon games")
        game = validate_game(dataclasses.replace(game, horizon=int(horizon)))
    return game


def _game_summary(game) -> dict:
    if isinstance(game, SimplifiedGame):
        return {
            "name": game.name, "kind": "own-state",
            "n_agents": game.n_agents, "n_states": game.n_states,
            "n_actions": game.n_actions, "horizon": game.horizon,
            "beta": game.beta, "mu": list(game.mu),
        }
    return {
        "name": game.name, "kind": "joint-state",
        "n_agents": game.n_agents, "state_sizes": list(game.state_sizes),
        "n_actions": game.n_actions, "gamma": game.gamma,
        "horizon": game.horizon, "beta": game.beta,
    }


def _write_manifest(out: Path, command: str, config: dict, game,
                    artifacts: dict, replay_argv: list, wall_ms: float,
                    extra: dict = None) -> None:
    doc = {
        "format": MANIFEST_FORMAT,
        "version": 1,
        "tool_version": __version__,
        "command": command,
        "config": config,
        "game": _game_summary(game) if game is not None else None,
        "artifacts": artifacts,
        "replay_argv": replay_argv,
        "wall_ms": wall_ms,
    }
    if extra:
        doc.update(extra)
    _json_dump(out / "manifest.json", doc)


def _policies_doc(solver: str, state_space: str, time_indexed: bool,
                  policies, n_actions: int) -> dict:
    if time_indexed:
        data = [[np.asarray(p).tolist() for p in stage] for stage in policies]
        n_agents = len(policies[0])
    else:
        data = [np.asarray(p).tolist() for p in policies]
        n_agents = len(policies)
    return {
        "format": POLICIES_FORMAT,
        "version": 1,
        "solver": solver,
        "state_space": state_space,
        "time_indexed": time_indexed,
        "n_agents": n_agents,
        "n_actions": int(n_actions),
        "policies": data,
    }


def _read_policies(path):
    """Load a policies.json (or the directory holding one)."""
    p = Path(path)
    if p.is_dir():
        p = p / "policies.json"
    if not p.is_file():
        raise FileNotFoundError(f"no policies file at {p}")
    with open(p) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GameFormatError(
                f"{p}: invalid JSON at line {exc.lineno}: {exc.msg}"
            ) from None
    if doc.get("format") != POLICIES_FORMAT:
        raise GameFormatError(f"{p}: not a {POLICIES_FORMAT} file")
    if doc.get("time_indexed"):
        policies = [[np.asarray(a, dtype=float) for a in stage]
                    for stage in doc["policies"]]
    else:
        policies = [np.asarray(a, dtype=float) for a in doc["policies"]]
    return doc, policies


def _policy_hash(policies, time_indexed: bool) -> str:
    digest = hashlib.sha256()
    stages = policies if time_indexed else [policies]
    for stage in stages:
        for p in stage:
            arg = np.ascontiguousarray(
                np.argmax(np.asarray(p), axis=-1), dtype=np.int64
            )
            digest.update(arg.tobytes())
    return digest.hexdigest()


def _print_bounds(bounds: dict) -> None:
    for name, check in bounds.items():
        status = "satisfied" if check.get("satisfied") else "NOT satisfied"
        detail = " ".join(
            f"{k}={check[k]:.6g}" for k in ("lhs", "rhs") if k in check
        )
        extra = ""
        if "gamma_ab" in check:
            extra = f" gamma_ab={check['gamma_ab']:.6g} alpha={check['alpha']}"
        line = f"bound[{name}]: {status} {detail}{extra}"
        if check.get("satisfied"):
            print(line)
        else:
            print(f"warning: {line}", file=sys.stderr)


def _flag_tokens(pairs) -> list:
    tokens = []
    for flag, value in pairs:
        if value is None or value is False:
            continue
        if value is True:
            tokens.append(flag)
            continue
        if isinstance(value, (list, tuple)):
            value = ",".join(repr(v) if isinstance(v, float) else str(v)
                             for v in value)
        elif isinstance(value, float):
            value = repr(value)
        tokens.extend([flag, str(value)])
    return tokens


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def _solve_mge_i(game, args, out):
    if not isinstance(game, MarkovGame) or game.gamma is None:
        raise ValueError("mge-i needs a discounted joint-state game")
    epsilon = 1e-8 if args.epsilon is None else args.epsilon
    max_sweeps = 100_000 if args.max_iters is None else args.max_iters
    solver = InfiniteHorizonSolver(
        epsilon=epsilon, max_sweeps=max_sweeps, sweep_mode=args.sweep_mode,
        init=args.init, init_scale=args.init_scale, seed=args.seed,
    )
    solver.fit(game)
    bounds = {"infinite_contraction": solver.bound_check_}
    if out is not None:
        write_trace_csv(out / "trace.csv", solver.trace_)
        _json_dump(out / "policies.json", _policies_doc(
            "mge-i", "joint", False, solver.policies_, game.n_actions))
        np.save(out / "q_tables.npy", np.stack(solver.q_))
    residual = solver.residual_
    return (bounds, solver.converged_, solver.n_sweeps_, residual,
            "(agent, state, action)",
            {"epsilon": epsilon, "max_iters": max_sweeps,
             "sweep_mode": args.sweep_mode})


def _solve_mge_f(game, args, out):
    if not isinstance(game, MarkovGame) or game.horizon is None:
        raise ValueError("mge-f needs a finite-horizon joint-state game")
    epsilon = 1e-8 if args.epsilon is None else args.epsilon
    max_inner = 100_000 if args.max_iters is None else args.max_iters
    solver = FiniteHorizonSolver(
        epsilon=epsilon, alpha=args.alpha, max_inner_iters=max_inner,
        init=args.init, init_scale=args.init_scale, seed=args.seed,
        warm_start=not args.cold_start,
    )
    solver.fit(game)
    bounds = {
        "finite_contraction": solver.bound_check_,
        "damping": solver.damping_check_,
    }
    if out is not None:
        write_stage_traces_csv(out / "trace.csv", solver.traces_)
        _json_dump(out / "policies.json", _policies_doc(
            "mge-f", "joint", True, solver.policies_by_time_, game.n_actions))
        np.save(out / "q_tables.npy",
                np.array([np.stack(stage) for stage in solver.q_by_time_]))
    iters = sum(t.iterations for t in solver.traces_)
    residual = max(
        (t.residuals[-1] for t in solver.traces_ if t.residuals), default=0.0
    )
    return (bounds, solver.converged_, iters, residual,
            "(stage, agent, state, action)",
            {"epsilon": epsilon, "max_iters": max_inner, "alpha": args.alpha,
             "warm_start": not args.cold_start})


def _solve_mge_fb(game, args, out):
    if not isinstance(game, SimplifiedGame):
        raise ValueError(
            "mge-fb needs an own-state game (built-in 'driving')"
        )
    n_iterations = 50 if args.max_iters is None else args.max_iters
    epsilon = 0.0 if args.epsilon is None else args.epsilon
    solver = ForwardBackwardSolver(
        n_iterations=n_iterations, epsilon=epsilon, init=args.init,
        init_scale=args.init_scale, seed=args.seed,
    )
    solver.fit(game)
    bounds = {"forward_backward": solver.bound_check_}
    if out is not None:
        with open(out / "trace.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "delta", "wall_ms"])
            for k, (delta, ms) in enumerate(
                    zip(solver.trace_.deltas, solver.trace_.wall_ms), start=1):
                writer.writerow([k, repr(delta), repr(ms)])
        _json_dump(out / "policies.json", _policies_doc(
            "mge-fb", "own", True, solver.policies_by_time_, game.n_actions))
        np.save(out / "q_tables.npy", np.stack(solver.q_by_time_))
        with open(out / "occupancies.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["agent", "tau", "state", "occupancy"])
            for i, occ in enumerate(solver.occupancies_):
                for tau in range(occ.shape[0]):
                    for x in range(occ.shape[1]):
                        writer.writerow([i, tau, x, repr(float(occ[tau, x]))])
        config = RolloutConfig(execution="argmax", episodes=1, seed=0,
                               initial_state="fixed")
        report = run_simplified_rollouts(
            game, solver.policies_by_time_, config
        )
        states, _ = report.trajectories[0]
        with open(out / "argmax_trajectory.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["agent", "tau", "state"])
            for i in range(game.n_agents):
                for tau in range(states.shape[0]):
                    writer.writerow([i, tau, int(states[tau, i])])
    delta = solver.deltas_[-1] if len(solver.deltas_) else 0.0
    return (bounds, solver.converged_, solver.trace_.iterations, delta,
            "(agent, tau, state, action)",
            {"epsilon": epsilon, "max_iters": n_iterations})


def cmd_solve(args) -> int:
    game = _load_built_game(args, builder_initial=args.initial)
    out = None
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    runner = {"mge-i": _solve_mge_i, "mge-f": _solve_mge_f,
              "mge-fb": _solve_mge_fb}[args.solver]
    bounds, converged, iterations, residual, q_axes, resolved = runner(
        game, args, out
    )
    wall_ms = (time.perf_counter() - start) * 1000.0

    _print_bounds(bounds)
    print(f"solver={args.solver} game={game.name or args.game} "
          f"converged={converged} iterations={iterations} "
          f"residual={residual:.3e} wall_ms={wall_ms:.1f}")
    if out is not None:
        artifacts = {"trace": "trace.csv", "policies": "policies.json",
                     "q_tables": "q_tables.npy"}
        if args.solver == "mge-fb":
            artifacts["occupancies"] = "occupancies.csv"
            artifacts["argmax_trajectory"] = "argmax_trajectory.csv"
        config = {
            "game": args.game, "solver": args.solver, "seed": args.seed,
            "init": args.init, "init_scale": args.init_scale,
            "beta": args.beta, "horizon": args.horizon,
            "initial": args.initial, "mu": args.mu, **resolved,
        }
        replay_argv = ["solve"] + _flag_tokens([
            ("--game", args.game), ("--solver", args.solver),
            ("--epsilon", resolved.get("epsilon")),
            ("--alpha", resolved.get("alpha")),
            ("--max-iters", resolved.get("max_iters")),
            ("--seed", args.seed), ("--init", args.init),
            ("--init-scale", args.init_scale),
            ("--sweep-mode", args.sweep_mode if args.solver == "mge-i"
             else None),
            ("--cold-start", args.cold_start if args.solver == "mge-f"
             else None),
            ("--beta", args.beta), ("--horizon", args.horizon),
            ("--initial", args.initial), ("--mu", args.mu),
        ])
        _write_manifest(
            out, "solve", config, game, artifacts, replay_argv, wall_ms,
            extra={"bounds": bounds, "converged": converged,
                   "iterations": iterations, "residual": residual,
                   "q_tables_axes": q_axes},
        )
        print(f"artifacts written to {out}")
    return 0


# ---------------------------------------------------------------------------
# rollout
# ---------------------------------------------------------------------------

def cmd_rollout(args) -> int:
    game = _load_built_game(args)
    doc, policies = _read_policies(args.policies)
    own_state = doc.get("state_space") == "own"
    if own_state != isinstance(game, SimplifiedGame):
        raise ValueError(
            "policy file and game disagree about the state space "
            f"({doc.get('state_space')} policies, {type(game).__name__} game)"
        )
    start = time.perf_counter()
    detector = detector_for(game.name)
    if own_state:
        if args.initial is not None:
            raise ValueError(
                "own-state games always start from their built-in initials"
            )
        config = RolloutConfig(
            execution=args.execution, episodes=args.episodes, seed=args.seed,
            initial_state="fixed", horizon=args.horizon,
        )
        report = run_simplified_rollouts(game, policies, config, detector)
    else:
        initial_mode = "fixed" if args.initial is not None else "random_from_p0"
        config = RolloutConfig(
            execution=args.execution, episodes=args.episodes, seed=args.seed,
            initial_state=initial_mode,
            fixed_state=tuple(args.initial) if args.initial else None,
            horizon=args.horizon,
        )
        report = run_rollouts(game, policies, config, detector)
    wall_ms = (time.perf_counter() - start) * 1000.0

    summary = score_summary(report)
    for row in summary["agents"]:
        print(f"agent {row['agent']}: mean reward {row['mean_reward']:.4f} "
              f"(std {row['std_reward']:.4f})")
    for name, stats in summary["events"].items():
        print(f"event {name}: total {stats['total']} "
              f"(mean/episode {stats['mean_per_episode']:.2f})")
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        report_doc = {
            "summary": summary,
            "episode_rewards": report.episode_rewards.tolist(),
            "event_counts": report.event_counts,
            "first_actions": [traj[1][0].tolist()
                              for traj in report.trajectories],
            "execution": report.execution,
            "seed": report.seed,
        }
        _json_dump(out / "report.json", report_doc)
        report.to_trajectory_log().to_csv(out / "trajectory.csv")
        config_doc = {
            "game": args.game, "policies": str(args.policies),
            "episodes": args.episodes, "execution": args.execution,
            "seed": args.seed, "initial": args.initial,
            "horizon": args.horizon, "beta": args.beta, "mu": args.mu,
        }
        replay_argv = ["rollout"] + _flag_tokens([
            ("--game", args.game), ("--policies", str(args.policies)),
            ("--episodes", args.episodes), ("--exec", args.execution),
            ("--seed", args.seed), ("--initial", args.initial),
            ("--horizon", args.horizon), ("--beta", args.beta),
            ("--mu", args.mu),
        ])
        _write_manifest(
            out, "rollout", config_doc, game,
            {"report": "report.json", "trajectories": "trajectory.csv"},
            replay_argv, wall_ms,
        )
        print(f"artifacts written to {out}")
    return 0


# ---------------------------------------------------------------------------
# irl
# ---------------------------------------------------------------------------

def _build_features(spec: str, game: MarkovGame):
    n, a = game.n_joint_states, game.n_actions
    if spec == "indicator":
        table = np.eye(n * a).reshape(n, a, n * a)
        return [table] * game.n_agents
    if spec == "rewards":
        return [np.asarray(r)[:, :, None] for r in game.rewards]
    data = np.load(spec)
    feats = []
    for i in range(game.n_agents):
        key = f"agent{i}"
        if key not in data:
            raise ValueError(f"{spec}: missing feature array {key!r}")
        feats.append(np.asarray(data[key], dtype=float))
    return feats


def cmd_irl(args) -> int:
    game = _load_built_game(args)
    if not isinstance(game, MarkovGame) or game.horizon is None:
        raise ValueError("irl needs a finite-horizon joint-state game")
    if args.observer >= game.n_agents:
        raise ValueError(
            f"observer {args.observer} out of range [0, {game.n_agents})"
        )
    trajectories = TrajectoryLog.from_csv(args.trajectories)
    features = _build_features(args.features, game)
    start = time.perf_counter()
    learner = OnlineRewardLearner(
        game=game, features=features, observer=args.observer,
        step_size=args.rho, ball_radius=args.ball_radius, n_steps=args.steps,
        forward_model=args.forward_model, inner_epsilon=args.epsilon,
        inner_alpha=args.alpha, gap_tol=args.gap_tol,
    )
    learner.fit(trajectories)
    wall_ms = (time.perf_counter() - start) * 1000.0

    learned = [j for j in range(game.n_agents) if j != args.observer]
    if learner.n_steps_ == 0:
        for j in learned:
            print(f"theta[{j}] = {learner.theta_[j].tolist()}")
    else:
        for j in learned:
            norm = float(np.linalg.norm(learner.theta_[j]))
            print(f"theta[{j}]: norm {norm:.4f} "
                  f"gap norm {learner.gap_norms_[j]:.6f}")
    print(f"irl steps={learner.n_steps_} wall_ms={wall_ms:.1f}")

    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "theta_history.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "agent", "coord", "value"])
            for j in learned:
                for k in range(features[j].shape[2]):
                    writer.writerow([0, j, k, repr(0.0)])
            for step, thetas in enumerate(learner.theta_history_, start=1):
                for j in learned:
                    for k, v in enumerate(thetas[j]):
                        writer.writerow([step, j, k, repr(float(v))])
        with open(out / "gaps.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "agent", "gap_norm"])
            for step, norms in enumerate(learner.gap_norm_history_, start=1):
                for j in sorted(norms):
                    writer.writerow([step, j, repr(float(norms[j]))])
        config_doc = {
            "game": args.game, "trajectories": str(args.trajectories),
            "observer": args.observer, "steps": args.steps, "rho": args.rho,
            "ball_radius": args.ball_radius, "features": args.features,
            "forward_model": args.forward_model, "gap_tol": args.gap_tol,
            "epsilon": args.epsilon, "alpha": args.alpha,
            "beta": args.beta, "horizon": args.horizon,
        }
        replay_argv = ["irl"] + _flag_tokens([
            ("--game", args.game),
            ("--trajectories", str(args.trajectories)),
            ("--observer", args.observer), ("--steps", args.steps),
            ("--rho", args.rho), ("--ball-radius", args.ball_radius),
            ("--features", args.features),
            ("--forward-model", args.forward_model),
            ("--gap-tol", args.gap_tol), ("--epsilon", args.epsilon),
            ("--alpha", args.alpha), ("--beta", args.beta),
            ("--horizon", args.horizon),
        ])
        _write_manifest(
            out, "irl", config_doc, game,
            {"theta_history": "theta_history.csv", "gaps": "gaps.csv"},
            replay_argv, wall_ms,
            extra={
                "steps_run": learner.n_steps_,
                "gap_norms": learner.gap_norms_,
                "inner_converged": learner.inner_converged_,
            },
        )
        print(f"artifacts written to {out}")
    return 0


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def _bench_cell(game, solver_id, alpha, seed, epsilon, max_iters):
    """Run one grid cell; return (rows, cell_record)."""
    rows = []
    if solver_id == "mge-i":
        eps = 1e-8 if epsilon is None else epsilon
        cap = 100_000 if max_iters is None else max_iters
        est = InfiniteHorizonSolver(epsilon=eps, max_sweeps=cap,
                                    init="random", seed=seed)
        est.fit(game)
        for it, res, ms in est.trace_.rows():
            rows.append((0, it, res, ms))
        record = {"converged": est.converged_,
                  "iterations": est.n_sweeps_,
                  "policy_hash": _policy_hash(est.policies_, False)}
    elif solver_id == "mge-f":
        eps = 1e-8 if epsilon is None else epsilon
        cap = 100_000 if max_iters is None else max_iters
        est = FiniteHorizonSolver(epsilon=eps, alpha=alpha,
                                  max_inner_iters=cap, init="random",
                                  seed=seed)
        est.fit(game)
        for trace in est.traces_:
            for it, res, ms in trace.rows():
                rows.append((trace.label, it, res, ms))
        record = {"converged": est.converged_,
                  "iterations": sum(t.iterations for t in est.traces_),
                  "policy_hash": _policy_hash(est.policies_by_time_, True)}
    else:
        eps = 0.0 if epsilon is None else epsilon
        cap = 50 if max_iters is None else max_iters
        est = ForwardBackwardSolver(n_iterations=cap, epsilon=eps,
                                    init="random", seed=seed)
        est.fit(game)
        for k, (delta, ms) in enumerate(
                zip(est.trace_.deltas, est.trace_.wall_ms), start=1):
            rows.append((0, k, delta, ms))
        record = {"converged": est.converged_,
                  "iterations": est.trace_.iterations,
                  "policy_hash": _policy_hash(est.policies_by_time_, True)}
    return rows, record


def cmd_bench(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    alphas = args.alpha if args.solver == "mge-f" else [None]
    betas = args.betas if args.betas is not None else [None]
    seeds = args.seeds
    start = time.perf_counter()
    cells = []
    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["config_id", "alpha", "beta", "seed", "stage",
                         "iteration", "residual", "wall_ms"])
        for config_id, (alpha, beta, seed) in enumerate(
                itertools.product(alphas, betas, seeds)):
            cell_args = argparse.Namespace(
                game=args.game, beta=beta, horizon=args.horizon, mu=args.mu
            )
            game = _load_built_game(cell_args, builder_initial=args.initial)
            rows, record = _bench_cell(
                game, args.solver, alpha if alpha is not None else 1.0,
                seed, args.epsilon, args.max_iters,
            )
            for stage, it, res, ms in rows:
                writer.writerow([
                    config_id,
                    "" if alpha is None else repr(alpha),
                    "" if beta is None else repr(beta),
                    seed, stage, it, repr(res), repr(ms),
                ])
            record.update({
                "config_id": config_id, "alpha": alpha, "beta": beta,
                "seed": seed,
            })
            cells.append(record)
            print(f"cell {config_id}: alpha={alpha} beta={beta} seed={seed} "
                  f"converged={record['converged']} "
                  f"iterations={record['iterations']} "
                  f"policy={record['policy_hash'][:12]}")
    wall_ms = (time.perf_counter() - start) * 1000.0
    distinct = sorted({c["policy_hash"] for c in cells})
    print(f"bench cells={len(cells)} distinct_policies={len(distinct)}")
    config_doc = {
        "game": args.game, "solver": args.solver,
        "alpha": args.alpha, "betas": args.betas, "seeds": args.seeds,
        "epsilon": args.epsilon, "max_iters": args.max_iters,
        "horizon": args.horizon, "initial": args.initial, "mu": args.mu,
    }
    replay_argv = ["bench"] + _flag_tokens([
        ("--game", args.game), ("--solver", args.solver),
        ("--alpha", args.alpha if args.solver == "mge-f" else None),
        ("--betas", args.betas), ("--seeds", args.seeds),
        ("--epsilon", args.epsilon), ("--max-iters", args.max_iters),
        ("--horizon", args.horizon), ("--initial", args.initial),
        ("--mu", args.mu),
    ])
    _write_manifest(
        out, "bench", config_doc, None, {"sweep": "sweep.csv"},
        replay_argv, wall_ms,
        extra={"cells": cells, "distinct_policies": len(distinct)},
    )
    print(f"artifacts written to {out}")
    return 0


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------

def cmd_replay(args) -> int:
    with open(args.manifest) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GameFormatError(
                f"{args.manifest}: invalid JSON at line {exc.lineno}: "
                f"{exc.msg}"
            ) from None
    if doc.get("format") != MANIFEST_FORMAT:
        raise GameFormatError(f"{args.manifest}: not a {MANIFEST_FORMAT} file")
    argv = list(doc.get("replay_argv") or [])
    if not argv or argv[0] == "replay":
        raise GameFormatError(f"{args.manifest}: manifest is not replayable")
    argv += ["--out", args.out]
    print(f"replaying: {' '.join(argv)}")
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
