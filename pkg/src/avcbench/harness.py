"""Training/evaluation loops, metrics persistence, and the experiment drivers."""
from __future__ import annotations

import csv
import io
import logging
import statistics
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .agents import Agent, NonFiniteLossError, make_agent
from .config import RunConfig, format_config
from .env import (ActionSpaceSpec, Observation, Presolved, Shaping, VoltageControlEnv,
                  episode_return)
from .grid import GridCase, load_case
from .powerflow import VoltageClass, solve
from .scenario import FoldPlan, ImpedanceMode, Scenario, make_scenarios

log = logging.getLogger(__name__)

WINDOW = 50
CSV_FIELDS = ("episode", "r_f", "iterations", "presolved", "success", "devices_moved", "loss",
              "contingency", "final_class", "explore_scale")


class EmptySummaryError(ValueError):
    pass


class ArchitectureMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    r_f: float
    iterations: int
    presolved: bool
    success: bool
    devices_moved: int
    loss: float
    contingency: tuple[int, ...] | None
    final_class: str
    explore_scale: float = float("nan")

    def row(self) -> list[str]:
        cont = "-" if self.contingency is None else ";".join(map(str, self.contingency))
        return [str(self.episode), repr(float(self.r_f)), str(self.iterations),
                str(int(self.presolved)), str(int(self.success)), str(self.devices_moved),
                repr(float(self.loss)), cont, self.final_class, repr(float(self.explore_scale))]

    @classmethod
    def from_row(cls, row: dict) -> "EpisodeRecord":
        cont = None if row["contingency"] == "-" else tuple(
            int(k) for k in row["contingency"].split(";"))
        return cls(int(row["episode"]), float(row["r_f"]), int(row["iterations"]),
                   bool(int(row["presolved"])), bool(int(row["success"])),
                   int(row["devices_moved"]), float(row["loss"]), cont, row["final_class"],
                   float(row["explore_scale"]))


@dataclass(frozen=True)
class RunSummary:
    """Aggregates derived from episode records; nothing here is stored independently."""
    episodes: int
    presolved: int
    attempted: int
    successes: int
    success_rate: float
    within5_rate: float
    median_iterations: float
    mean_r_f: float
    window_means: tuple[float, ...]
    iteration_histogram: dict[int, int]
    devices_histogram: dict[int, int]
    mean_devices_moved: float
    mean_loss: float
    incremental_loss: float | None = None

    def report(self) -> str:
        lines = [
            f"episodes={self.episodes}",
            f"presolved={self.presolved}",
            f"attempted={self.attempted}",
            f"successes={self.successes}",
            f"success_rate={self.success_rate!r}",
            f"within5_rate={self.within5_rate!r}",
            f"median_iterations={self.median_iterations!r}",
            f"mean_r_f={self.mean_r_f!r}",
            f"mean_devices_moved={self.mean_devices_moved!r}",
            f"mean_loss={self.mean_loss!r}",
        ]
        if self.incremental_loss is not None:
            lines.append(f"incremental_loss={self.incremental_loss!r}")
        lines.append("window_means=" + ",".join(repr(m) for m in self.window_means))
        lines.append("iteration_histogram=" + ",".join(
            f"{k}:{v}" for k, v in sorted(self.iteration_histogram.items())))
        lines.append("devices_histogram=" + ",".join(
            f"{k}:{v}" for k, v in sorted(self.devices_histogram.items())))
        return "\n".join(lines) + "\n"


def window_means(records: Sequence[EpisodeRecord], window: int = WINDOW) -> tuple[float, ...]:
    """Mean r_f over consecutive blocks of ``window`` episodes (last block may be short);
    presolved episodes contribute their sentinel."""
    values = [r.r_f for r in records]
    return tuple(float(np.mean(values[i:i + window])) for i in range(0, len(values), window))


def summarize(records: Sequence[EpisodeRecord]) -> RunSummary:
    if not records:
        raise EmptySummaryError("no episode records to summarize")
    attempted = [r for r in records if not r.presolved]
    successes = sum(r.success for r in attempted)
    n_att = len(attempted)
    within5 = sum(r.success and r.iterations <= 5 for r in attempted)
    iters = [r.iterations for r in attempted]
    losses = [r.loss for r in records if np.isfinite(r.loss)]
    return RunSummary(
        episodes=len(records),
        presolved=len(records) - n_att,
        attempted=n_att,
        successes=successes,
        success_rate=successes / n_att if n_att else float("nan"),
        within5_rate=within5 / n_att if n_att else float("nan"),
        median_iterations=float(statistics.median(iters)) if iters else float("nan"),
        mean_r_f=float(np.mean([r.r_f for r in records])),
        window_means=window_means(records),
        iteration_histogram=dict(sorted(Counter(r.iterations for r in records).items())),
        devices_histogram=dict(sorted(Counter(r.devices_moved for r in records).items())),
        mean_devices_moved=float(np.mean([r.devices_moved for r in attempted])) if n_att
        else 0.0,
        mean_loss=float(np.mean(losses)) if losses else float("nan"),
    )


def read_records(path: str | Path) -> list[EpisodeRecord]:
    """Parse an ``episodes.csv``; a trailing partial line from a crashed run is skipped."""
    text = Path(path).read_text()
    lines = text.splitlines(keepends=True)
    if lines and not lines[-1].endswith("\n"):
        lines = lines[:-1]
    reader = csv.DictReader(io.StringIO("".join(lines)))
    out = []
    for row in reader:
        if None in row.values() or len(row) != len(CSV_FIELDS):
            continue
        out.append(EpisodeRecord.from_row(row))
    return out


class RecordWriter:
    """Append-only CSV writer that flushes each row."""

    def __init__(self, path: Path | None):
        self.path = path
        self._fh = None
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(path, "w", newline="")
            self._fh.write(",".join(CSV_FIELDS) + "\n")
            self._fh.flush()

    def write(self, rec: EpisodeRecord) -> None:
        if self._fh is not None:
            self._fh.write(",".join(rec.row()) + "\n")
            self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# --- setup -----------------------------------------------------------------------------

@dataclass
class RunContext:
    config: RunConfig
    base: GridCase
    space: ActionSpaceSpec
    env: VoltageControlEnv
    obs_dim: int


def build_context(config: RunConfig) -> RunContext:
    base = load_case(config.case_path())
    kind = config.kind
    if kind == "ltc":
        space = ActionSpaceSpec.for_case(base, "ltc", ltcs=config.controlled_ltcs,
                                         ltc_relative=config.ltc_relative,
                                         ltc_max_step=config.ltc_max_step,
                                         ltc_discrete=config.ltc_discrete)
    else:
        space = ActionSpaceSpec.for_case(base, kind, gens=config.controlled_gens,
                                         levels_per_gen=config.levels_per_gen,
                                         bounds=config.action_bounds)
    env = VoltageControlEnv(space, config.reward, config.episode)
    obs_dim = base.n_bus + space.n_devices
    return RunContext(config, base, space, env, obs_dim)


def build_agent(ctx: RunContext) -> Agent:
    return make_agent(ctx.config.algorithm, ctx.obs_dim, ctx.space, ctx.config.agent_config(),
                      seed=ctx.config.agent_seed())


def explore_scale(agent: Agent) -> float:
    state = agent.schedule_state()
    for key in ("noise_scale", "epsilon", "alpha"):
        if key in state:
            return float(state[key])
    return float("nan")


def run_episode(ctx: RunContext, agent: Agent, scenario: Scenario, index: int, learn: bool,
                use_true_case: bool) -> EpisodeRecord:
    env = ctx.env
    scale = explore_scale(agent)
    first = env.reset(scenario, use_true_case=use_true_case)
    if isinstance(first, Presolved):
        return EpisodeRecord(index, first.reward, 0, True, True, 0,
                             first.solution.total_loss, scenario.applied_contingency,
                             VoltageClass.ALL_NORMAL.value, scale)
    obs: Observation = first
    start_controls = obs.control_state.copy()
    moved = np.zeros(len(start_controls), dtype=bool)
    rewards = []
    t = None
    while env.active:
        s_vec = obs.vector(ctx.space)
        action = agent.act(s_vec, explore=learn)
        t = env.step(action)
        moved |= t.s_next.control_state != t.s.control_state
        rewards.append(t.r)
        if learn:
            agent.remember(s_vec, action, t.r, t.s_next.vector(ctx.space), t.done)
            agent.update()
        obs = t.s_next
    success = t.classification is VoltageClass.ALL_NORMAL
    return EpisodeRecord(index, episode_return(rewards), len(rewards), False, success,
                         int(moved.sum()), t.loss, scenario.applied_contingency,
                         t.classification.value, scale)


# --- operations ------------------------------------------------------------------------

@dataclass
class TrainResult:
    summary: RunSummary
    records: list[EpisodeRecord]
    agent: Agent
    context: RunContext
    out_dir: Path | None = None
    test_summary: RunSummary | None = None
    test_records: list[EpisodeRecord] = field(default_factory=list)


def write_manifest(path: Path, config: RunConfig, agent: Agent) -> None:
    lines = [f"algorithm={agent.algorithm}", f"obs_dim={agent.obs_dim}",
             f"action_kind={agent.space.kind}", f"action_dim={agent.space.n_devices}",
             f"updates={agent.updates}"]
    for k, v in agent.schedule_state().items():
        lines.append(f"schedule.{k}={v!r}")
    for k, v in agent.config.items().items():
        lines.append(f"agent.{k}={v!r}")
    lines.append("")
    lines.append("# run configuration")
    path.write_text("\n".join(lines) + "\n" + format_config(config))


def train(config: RunConfig, scenarios: Sequence[Scenario] | None = None) -> TrainResult:
    """Train one agent over the configured scenario stream.

    Writes ``episodes.csv`` (row by row), ``summary.txt``, ``agent.ckpt`` and
    ``manifest.txt`` when ``config.out_dir`` is set.
    """
    ctx = build_context(config)
    agent = build_agent(ctx)
    if scenarios is None:
        scenarios = make_scenarios(ctx.base, config.train_spec(), config.train_episodes)
    out = Path(config.out_dir) if config.out_dir else None
    records = []
    with RecordWriter(out / "episodes.csv" if out else None) as writer:
        for i, sc in enumerate(scenarios):
            try:
                rec = run_episode(ctx, agent, sc, i, learn=True, use_true_case=False)
            except NonFiniteLossError as exc:
                diag = EpisodeRecord(i, float("nan"), 0, False, False, 0, float("nan"),
                                     sc.applied_contingency, f"aborted:{exc}".replace(",", ";"),
                                     explore_scale(agent))
                writer.write(diag)
                raise
            records.append(rec)
            writer.write(rec)
            agent.end_episode()
    summary = summarize(records)
    if out:
        (out / "summary.txt").write_text(summary.report())
        agent.save(out / "agent.ckpt")
        write_manifest(out / "manifest.txt", config, agent)
    log.info("trained %s: success %.3f over %d episodes", config.algorithm,
             summary.success_rate, summary.episodes)
    return TrainResult(summary, records, agent, ctx, out)


def test_scenarios(config: RunConfig, base: GridCase | None = None) -> list[Scenario]:
    base = base if base is not None else load_case(config.case_path())
    return make_scenarios(base, config.test_spec(), config.test_episodes)


def evaluate(checkpoint: Agent | str | Path, config: RunConfig,
             scenarios: Sequence[Scenario] | None = None,
             out_path: Path | None = None) -> tuple[RunSummary, list[EpisodeRecord]]:
    """Greedy rollouts on each scenario's exact-impedance twin, without learning."""
    ctx = build_context(config)
    if isinstance(checkpoint, Agent):
        agent = checkpoint
        if agent.obs_dim != ctx.obs_dim or agent.space != ctx.space:
            raise ArchitectureMismatchError("agent does not match the configured case/space")
    else:
        agent = build_agent(ctx)
        try:
            agent.load(checkpoint)
        except ValueError as exc:
            raise ArchitectureMismatchError(str(exc)) from None
    if scenarios is None:
        scenarios = test_scenarios(config, ctx.base)
    if len(scenarios) == 0:
        raise EmptySummaryError("no scenarios to evaluate")
    records = []
    with RecordWriter(out_path) as writer:
        for i, sc in enumerate(scenarios):
            rec = run_episode(ctx, agent, sc, i, learn=False, use_true_case=True)
            records.append(rec)
            writer.write(rec)
    return summarize(records), records


def train_and_evaluate(config: RunConfig, test: Sequence[Scenario] | None = None) -> TrainResult:
    result = train(config)
    out = result.out_dir
    summary, recs = evaluate(result.agent, config, test,
                             out_path=out / "test_episodes.csv" if out else None)
    if out:
        (out / "test_summary.txt").write_text(summary.report())
    result.test_summary = summary
    result.test_records = recs
    return result


@dataclass
class CrossValReport:
    folds: list[RunSummary]
    mean_success: float
    std_success: float
    mean_r_f: float
    std_r_f: float

    def report(self) -> str:
        lines = [f"folds={len(self.folds)}",
                 f"mean_success={self.mean_success!r}", f"std_success={self.std_success!r}",
                 f"mean_r_f={self.mean_r_f!r}", f"std_r_f={self.std_r_f!r}"]
        for k, s in enumerate(self.folds):
            lines.append(f"fold.{k}.success_rate={s.success_rate!r}")
            lines.append(f"fold.{k}.mean_r_f={s.mean_r_f!r}")
        return "\n".join(lines) + "\n"


def crossval(config: RunConfig, plan: FoldPlan, force_same_seed: bool = False) -> CrossValReport:
    """Train one agent per fold seed and evaluate every fold on the shared test stream."""
    base_cfg = replace(config, train_episodes=plan.train_episodes,
                       test_episodes=plan.test_episodes, test_seed=plan.shared_test_seed)
    test = test_scenarios(base_cfg)
    summaries = []
    for k, fold_seed in enumerate(plan.folds):
        seed = plan.folds[0] if force_same_seed else fold_seed
        out = Path(config.out_dir) / f"fold{k}" if config.out_dir else None
        cfg = replace(base_cfg, seed=seed, out_dir=str(out) if out else None)
        summaries.append(train_and_evaluate(cfg, test).test_summary)
    rates = [s.success_rate for s in summaries]
    rfs = [s.mean_r_f for s in summaries]
    report = CrossValReport(summaries, float(np.mean(rates)), float(np.std(rates)),
                            float(np.mean(rfs)), float(np.std(rfs)))
    if config.out_dir:
        Path(config.out_dir).mkdir(parents=True, exist_ok=True)
        (Path(config.out_dir) / "summary.txt").write_text(report.report())
    return report


def heaviest_branch(case: GridCase) -> int:
    """In-service branch carrying the largest apparent power in the base solution."""
    sol = solve(case)
    flows = np.abs(sol.branch_flows).max(axis=1)
    return int(np.argmax(flows))


def fidelity_conditions(case: GridCase, line: int | None = None) -> list[tuple[str, ImpedanceMode]]:
    k = heaviest_branch(case) if line is None else line
    return [("exact", ImpedanceMode.exact()),
            ("single_8pct", ImpedanceMode.single_line(k, 0.08)),
            ("single_20pct", ImpedanceMode.single_line(k, 0.20)),
            ("random_20pct", ImpedanceMode.random_all(-0.2, 0.2))]


def incremental_loss(records: Sequence[EpisodeRecord],
                     reference: Sequence[EpisodeRecord]) -> tuple[float, list[float]]:
    """Episode-matched loss difference against a reference run on the same test stream."""
    diffs = [a.loss - b.loss for a, b in zip(records, reference)
             if np.isfinite(a.loss) and np.isfinite(b.loss)]
    return (float(np.mean(diffs)) if diffs else float("nan")), diffs


@dataclass
class FidelityRow:
    condition: str
    mode: ImpedanceMode
    test: RunSummary
    train: RunSummary
    incremental_loss: float
    loss_curve: list[float]


def fidelity_experiment(config: RunConfig, line: int | None = None) -> list[FidelityRow]:
    """Train under the four impedance-error regimes with identical hyperparameters and
    evaluate all of them on the same exact-model test stream."""
    base = load_case(config.case_path())
    test = test_scenarios(config, base)
    rows = []
    reference = None
    for name, mode in fidelity_conditions(base, line):
        out = str(Path(config.out_dir) / name) if config.out_dir else None
        cfg = replace(config, scenario=replace(config.scenario, impedance_mode=mode), out_dir=out)
        res = train_and_evaluate(cfg, test)
        if reference is None:
            reference = res.test_records
        inc, curve = incremental_loss(res.test_records, reference)
        rows.append(FidelityRow(name, mode, res.test_summary, res.summary, inc, curve))
    if config.out_dir:
        write_fidelity_report(rows, Path(config.out_dir))
    return rows


def format_fidelity(rows: Sequence[FidelityRow]) -> str:
    lines = ["condition,impedance,success_rate,mean_r_f,median_iterations,mean_loss,"
             "incremental_loss"]
    for r in rows:
        lines.append(",".join([r.condition, str(r.mode).replace(",", ";"),
                               repr(r.test.success_rate), repr(r.test.mean_r_f),
                               repr(r.test.median_iterations), repr(r.test.mean_loss),
                               repr(r.incremental_loss)]))
    return "\n".join(lines) + "\n"


def write_fidelity_report(rows, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "fidelity.csv").write_text(format_fidelity(rows))
    curve_lines = ["episode," + ",".join(r.condition for r in rows)]
    n = min(len(r.loss_curve) for r in rows)
    for i in range(n):
        curve_lines.append(",".join([str(i)] + [repr(r.loss_curve[i]) for r in rows]))
    (out / "incremental_loss.csv").write_text("\n".join(curve_lines) + "\n")


@dataclass
class EffortRow:
    epsilon: float
    test: RunSummary
    histogram_per_10k: dict[int, float]


def effort_sweep(config: RunConfig, epsilons: Sequence[float],
                 replicates: int = 1) -> list[EffortRow]:
    """One train+evaluate per effort weight; histograms of devices moved per test case.

    With ``replicates > 1`` each weight is trained from seeds ``seed, seed+1, ...``
    and the test records of all replicates are pooled; the test stream is shared.
    """
    if config.kind != "ltc":
        raise ValueError("effort sweep expects an LTC action space")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    base = load_case(config.case_path())
    test = test_scenarios(config, base)
    rows = []
    for eps in epsilons:
        pooled: list[EpisodeRecord] = []
        for rep in range(replicates):
            out = None
            if config.out_dir:
                sub = f"eps_{eps:g}" if replicates == 1 else f"eps_{eps:g}/rep_{rep}"
                out = str(Path(config.out_dir) / sub)
            cfg = replace(config, seed=config.seed + rep, out_dir=out,
                          reward=replace(config.reward, shaping=Shaping("effort", eps)))
            pooled.extend(train_and_evaluate(cfg, test).test_records)
        summary = summarize(pooled)
        hist = summary.devices_histogram
        total = sum(hist.values())
        rows.append(EffortRow(eps, summary,
                              {k: 10_000 * v / total for k, v in sorted(hist.items())}))
    if config.out_dir:
        Path(config.out_dir).mkdir(parents=True, exist_ok=True)
        (Path(config.out_dir) / "effort.csv").write_text(format_effort(rows))
    return rows


def format_effort(rows: Sequence[EffortRow]) -> str:
    n_max = max((max(r.histogram_per_10k, default=0) for r in rows), default=0)
    cols = list(range(n_max, -1, -1))
    lines = ["epsilon,success_rate,mean_devices_moved," + ",".join(f"moved_{c}" for c in cols)]
    for r in rows:
        lines.append(",".join([repr(r.epsilon), repr(r.test.success_rate),
                               repr(r.test.mean_devices_moved)]
                              + [f"{r.histogram_per_10k.get(c, 0.0):.1f}" for c in cols]))
    return "\n".join(lines) + "\n"
