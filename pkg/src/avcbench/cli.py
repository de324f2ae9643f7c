"""Command line entry point: ``avcbench <subcommand> ...`` or ``python -m avcbench``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import harness
from .config import ConfigError, RunConfig, load_config
from .env import Shaping
from .grid import CaseError, fixture_path, load_case
from .powerflow import SolverSettings, check_voltage_band, format_solution, solve
from .scenario import (ImpedanceMode, ScenarioSpec, make_fold_plan, make_scenarios,
                       read_contingency_file, write_scenarios)

log = logging.getLogger("avcbench")


def _run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value run configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--algo", choices=("dqn", "ddpg", "sac"))
    p.add_argument("--shaping", help="none | loss:<eps> | effort:<eps>")
    p.add_argument("--episodes", type=int, help="training episodes")
    p.add_argument("--test-episodes", type=int)
    p.add_argument("--case", help="fixture name or .case path")
    p.add_argument("--no-target", action="store_true", help="disable target networks")


def run_config(args) -> RunConfig:
    """Config file (if any) overridden by explicit flags."""
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.algo and args.algo != cfg.algorithm:
        # agent overrides belong to the old algorithm's config class
        cfg = replace(cfg, algorithm=args.algo, agent_overrides=(), action_kind=None)
    if args.case:
        cfg = replace(cfg, case=args.case)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    if args.episodes is not None:
        cfg = replace(cfg, train_episodes=args.episodes)
    if getattr(args, "test_episodes", None) is not None:
        cfg = replace(cfg, test_episodes=args.test_episodes)
    if args.shaping:
        cfg = replace(cfg, reward=replace(cfg.reward, shaping=Shaping.parse(args.shaping)))
    if args.no_target:
        cfg = cfg.with_agent(use_target=False)
    return cfg


def cmd_train(args) -> int:
    cfg = run_config(args)
    if args.evaluate:
        result = harness.train_and_evaluate(cfg)
        print(result.test_summary.report(), end="")
    else:
        result = harness.train(cfg)
        print(result.summary.report(), end="")
    return 0


def cmd_eval(args) -> int:
    cfg = run_config(args)
    out = Path(cfg.out_dir) if cfg.out_dir else None
    summary, _ = harness.evaluate(args.checkpoint, cfg,
                                  out_path=out / "episodes.csv" if out else None)
    if out:
        (out / "summary.txt").write_text(summary.report())
    print(summary.report(), end="")
    return 0


def cmd_xval(args) -> int:
    cfg = run_config(args)
    plan = make_fold_plan(cfg.seed, cfg.train_episodes, cfg.test_episodes, args.folds)
    report = harness.crossval(cfg, plan, force_same_seed=args.same_seed)
    print(report.report(), end="")
    return 0


def cmd_fidelity(args) -> int:
    cfg = run_config(args)
    rows = harness.fidelity_experiment(cfg, line=args.line)
    print(harness.format_fidelity(rows), end="")
    return 0


def cmd_effort(args) -> int:
    cfg = run_config(args)
    eps = [float(x) for x in args.epsilons.split(",")]
    rows = harness.effort_sweep(cfg, eps, replicates=args.replicates)
    print(harness.format_effort(rows), end="")
    return 0


def _load(case: str):
    """A path to a ``.case`` file, or the name of a shipped fixture."""
    path = Path(case)
    return load_case(path if path.exists() else fixture_path(case))


def cmd_scenario_sample(args) -> int:
    base = _load(args.case)
    lo, hi = (float(x) for x in args.load_range.split(","))
    pool = read_contingency_file(args.contingency_file) if args.contingency_file else ()
    spec = ScenarioSpec(load_scale_range=(lo, hi), impedance_mode=ImpedanceMode.parse(args.impedance),
                        contingency_pool=pool,
                        contingency_probability=args.contingency_probability if pool else 0.0,
                        seed=args.seed)
    manifest = write_scenarios(make_scenarios(base, spec, args.count), args.out)
    print(f"wrote {args.count} scenarios to {manifest.parent}")
    return 0


def cmd_powerflow(args) -> int:
    case = _load(args.case)
    sol = solve(case, SolverSettings(args.tol, args.max_iter))
    if args.json:
        print(format_solution(case, sol), end="")
    else:
        status = "converged" if sol.converged else "DIVERGED"
        print(f"{status} in {sol.iterations} iterations, mismatch {sol.mismatch:.3e}")
        print(f"{'bus':>5} {'|V| pu':>10} {'angle rad':>11}")
        for bus, vm, va in zip(case.buses, sol.v_mag, sol.v_ang):
            print(f"{bus.id:>5} {vm:>10.6f} {va:>11.6f}")
        print(f"total loss {sol.total_loss * case.base_mva:.4f} MW")
        print(f"classification {check_voltage_band(sol).value}")
    return 0 if sol.converged else 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="avcbench", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one agent")
    _run_options(p)
    p.add_argument("--evaluate", action="store_true", help="also run the test stream")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint greedily")
    _run_options(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("xval", help="k-fold seeds, shared test stream")
    _run_options(p)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--same-seed", action="store_true", help="debug: reuse fold 0's seed")
    p.set_defaults(func=cmd_xval)

    p = sub.add_parser("fidelity", help="four impedance-error training conditions")
    _run_options(p)
    p.add_argument("--line", type=int, help="branch for single-line errors (default: heaviest)")
    p.set_defaults(func=cmd_fidelity)

    p = sub.add_parser("effort-sweep", help="effort-shaping weights over an LTC space")
    _run_options(p)
    p.add_argument("--epsilons", default="0,2,3")
    p.add_argument("--replicates", type=int, default=1, help="training seeds pooled per weight")
    p.set_defaults(func=cmd_effort)

    p = sub.add_parser("scenario", help="scenario utilities")
    ssub = p.add_subparsers(dest="scenario_command", required=True)
    s = ssub.add_parser("sample", help="draw scenarios and write them as case files")
    s.add_argument("--case", required=True)
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--load-range", default="0.8,1.2")
    s.add_argument("--impedance", default="exact")
    s.add_argument("--contingency-file")
    s.add_argument("--contingency-probability", type=float, default=1.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_scenario_sample)

    p = sub.add_parser("powerflow", help="solve one case")
    p.add_argument("--case", required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=30)
    p.add_argument("--json", action="store_true", help="key=value output")
    p.set_defaults(func=cmd_powerflow)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CaseError, harness.ArchitectureMismatchError,
            harness.EmptySummaryError, FileNotFoundError, ValueError) as exc:
        print(f"avcbench: error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, RuntimeError) as exc:
        print(f"avcbench: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
