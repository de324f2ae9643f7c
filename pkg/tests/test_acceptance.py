"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v`` (about six minutes on one
core; the effort sweep dominates).
"""
import time
import zlib
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from avcbench.agents import make_agent
from avcbench.config import RunConfig, load_config
from avcbench.env import (ActionSpaceSpec, ControlDelta, RewardConfig, Shaping, episode_return,
                          reward)
from avcbench.grid import load_fixture
from avcbench.harness import (effort_sweep, fidelity_experiment, read_records, train,
                              train_and_evaluate)
from avcbench.nn import Mlp
from avcbench.powerflow import SolverSettings, VoltageClass, solve
from oracles import directional_difference, gauss_seidel

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def report(request):
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def line(n, ok, detail):
        text = f"[acceptance {n:>2}] {'PASS' if ok else 'FAIL'}  {detail}"
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(text)
        else:
            print(text)
        return ok
    yield line


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def out_root(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def ddpg_run(out_root):
    cfg = replace(load_config(CONFIGS / "ddpg14.cfg"), out_dir=str(out_root / "ddpg"))
    return timed(train_and_evaluate, cfg)


@pytest.fixture(scope="module")
def sac_run(out_root):
    cfg = replace(load_config(CONFIGS / "sac14.cfg"), out_dir=str(out_root / "sac"))
    return timed(train_and_evaluate, cfg)


@pytest.fixture(scope="module")
def dqn_run(out_root):
    cfg = replace(load_config(CONFIGS / "dqn14.cfg"), out_dir=str(out_root / "dqn"))
    return timed(train_and_evaluate, cfg)


# 1 ------------------------------------------------------------------------------------

def test_c01_powerflow(report):
    case = load_fixture("ieee14")
    settings = SolverSettings(tolerance=1e-8)
    sol = solve(case, settings)
    vm, _, _ = gauss_seidel(case)
    dv = float(np.max(np.abs(sol.v_mag - vm)))
    balance = abs(float(sol.p_inj.sum()) - sol.total_loss)
    reps = 50
    t0 = time.perf_counter()
    for _ in range(reps):
        solve(case, settings)
    ms = 1000 * (time.perf_counter() - t0) / reps
    ok = sol.converged and sol.iterations <= 10 and dv <= 1e-5 and balance <= 1e-7 and ms < 10
    report(1, ok, f"iterations={sol.iterations} max|dV| vs Gauss-Seidel={dv:.2e} "
                  f"balance={balance:.2e} solve={ms:.2f} ms")
    assert ok


# 2 ------------------------------------------------------------------------------------

def agent_architectures():
    gen = ActionSpaceSpec("continuous", controlled_gens=(0, 1, 3, 4))
    grid = ActionSpaceSpec("discrete", controlled_gens=(0, 1, 3, 4))
    ltc = ActionSpaceSpec.for_case(load_fixture("ieee14_ltc"), "ltc", ltc_relative=True,
                                   ltc_max_step=1)
    nets = {}
    nets.update({f"dqn.{k}": v for k, v in make_agent("dqn", 18, grid).networks().items()})
    nets.update({f"ddpg.{k}": v for k, v in make_agent("ddpg", 18, gen).networks().items()})
    nets.update({f"sac.{k}": v for k, v in make_agent("sac", 18, gen).networks().items()})
    nets.update({f"sac_ltc.{k}": v for k, v in make_agent("sac", 31, ltc).networks().items()})
    shapes = {}
    for name, net in nets.items():
        shapes.setdefault((net.layer_sizes, net.activations), name)
    return {name: key for key, name in shapes.items()}


def test_c02_gradients(report):
    worst = {}
    for name, (sizes, acts) in agent_architectures().items():
        rng = np.random.default_rng(zlib.crc32(name.encode()))
        errs = []
        for k in range(100):
            net = Mlp(sizes, acts, seed=rng)
            x = rng.normal(size=sizes[0])
            u = rng.normal(size=sizes[-1])
            d = rng.normal(size=len(net.params))
            d /= np.linalg.norm(d)
            analytic = float(net.backward(x, u) @ d)

            def f(theta):
                return float(Mlp(sizes, acts, params=theta).forward(x) @ u)
            numeric = directional_difference(f, net.params, d, h=1e-6)
            errs.append(abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8))
        worst[name] = max(errs)
    ok = all(e <= 1e-4 for e in worst.values())
    detail = " ".join(f"{n}={e:.1e}" for n, e in worst.items())
    report(2, ok, f"{len(worst)} architectures x 100 checks, worst rel. err: {detail}")
    assert ok


# 3 ------------------------------------------------------------------------------------

def test_c03_reward_examples(report):
    class Sol:
        total_loss = 0.05
    cases = [
        (reward(VoltageClass.ALL_NORMAL, Sol, ControlDelta(0, 4), RewardConfig()), 400.0),
        (reward(VoltageClass.ALL_NORMAL, Sol, ControlDelta(0, 4),
                RewardConfig(shaping=Shaping("loss", 1.0))), 399.95),
        (reward(VoltageClass.VIOLATION, None, ControlDelta(2, 17),
                RewardConfig(shaping=Shaping("effort", 2.0))), -70.0),
        (reward(VoltageClass.SEVERE, None, ControlDelta(0, 17),
                RewardConfig(shaping=Shaping("effort", 2.0))), -1000.0),
        (episode_return([400]), 400.0),
        (episode_return([-100, 400]), 150.0),
        (episode_return([399.95] * 7), 399.95),
    ]
    ok = all(got == want for got, want in cases)
    report(3, ok, f"{sum(g == w for g, w in cases)}/{len(cases)} closed-form examples exact")
    assert ok


# 4 ------------------------------------------------------------------------------------

def test_c04_noise_decay(report, ddpg_run):
    result, _ = ddpg_run
    recs = read_records(result.out_dir / "episodes.csv")[:1000]
    cfg = result.agent.config
    expected = [cfg.noise_initial * cfg.noise_decay ** i for i in range(1000)]
    mismatches = sum(r.explore_scale != e for r, e in zip(recs, expected))
    ok = len(recs) == 1000 and mismatches == 0
    report(4, ok, f"{len(recs)} recorded scales, {mismatches} differ from xi0*r_d**i")
    assert ok


# 5 ------------------------------------------------------------------------------------

def test_c05_desk_scale_learning(report, ddpg_run, sac_run):
    parts, ok = [], True
    for name, (result, seconds) in (("ddpg", ddpg_run), ("sac", sac_run)):
        s = result.test_summary
        good = (s.episodes == 500 and s.within5_rate >= 0.9 and s.median_iterations == 1
                and seconds <= 1800)
        ok &= good
        parts.append(f"{name}: within5={s.within5_rate:.3f} median={s.median_iterations:g} "
                     f"time={seconds:.0f}s")
    report(5, ok, "; ".join(parts))
    assert ok


# 6 ------------------------------------------------------------------------------------

def test_c06_discrete_vs_continuous(report, ddpg_run, dqn_run):
    ddpg = ddpg_run[0].test_summary.success_rate
    dqn = dqn_run[0].test_summary.success_rate
    ok = ddpg >= dqn and dqn >= 0.8
    report(6, ok, f"ddpg={ddpg:.3f} dqn={dqn:.3f}")
    assert ok


# 7 ------------------------------------------------------------------------------------

def test_c07_model_fidelity(report, out_root):
    cfg = replace(load_config(CONFIGS / "ddpg14.cfg"), out_dir=str(out_root / "fidelity"))
    rows = fidelity_experiment(cfg)
    gap = abs(rows[3].test.success_rate - rows[0].test.success_rate)
    produced = (out_root / "fidelity" / "incremental_loss.csv").exists()
    ok = len(rows) == 4 and gap <= 0.05 and produced
    rates = " ".join(f"{r.condition}={r.test.success_rate:.3f}" for r in rows)
    report(7, ok, f"{rates} |cond4-cond1|={gap:.3f} incremental-loss report={produced}")
    assert ok


# 8 ------------------------------------------------------------------------------------

def test_c08_topology(report, out_root):
    cfg = replace(load_config(CONFIGS / "n1_ddpg14.cfg"), out_dir=str(out_root / "n1"))
    train_pool = {frozenset(s) for s in cfg.scenario.contingency_pool}
    test_pool = {frozenset(s) for s in cfg.test_contingency_pool}
    disjoint = len(train_pool) == 10 and all(len(s) == 1 for s in train_pool) \
        and not (train_pool & test_pool) \
        and not any(s & t for s in test_pool for t in train_pool if len(s) == 1)
    result = train_and_evaluate(cfg)
    s = result.test_summary
    recs = result.test_records
    accounting = (s.attempted == sum(not r.presolved for r in recs)
                  and s.success_rate == s.successes / s.attempted
                  and all(r.r_f == 500.0 for r in recs if r.presolved))
    # a stream whose scenarios start inside the band: every episode is logged presolved
    pre = train(RunConfig(algorithm="ddpg", case="twobus", train_episodes=20, test_episodes=1))
    sentinel = (pre.summary.presolved == 20 and pre.summary.attempted == 0
                and all(r.r_f == 500.0 for r in pre.records))
    ok = disjoint and accounting and sentinel and s.success_rate >= 0.85
    report(8, ok, f"held-out success={s.success_rate:.3f} over {s.attempted} attempted "
                  f"({s.presolved} presolved); pools disjoint={disjoint}; "
                  f"sentinel stream={sentinel}")
    assert ok


# 9 ------------------------------------------------------------------------------------

def test_c09_effort_shaping(report, out_root):
    cfg = replace(load_config(CONFIGS / "effort_ltc.cfg"), out_dir=str(out_root / "effort"))
    rows = effort_sweep(cfg, [0.0, 2.0, 3.0], replicates=3)
    moved = [r.test.mean_devices_moved for r in rows]
    success = [r.test.success_rate for r in rows]
    ok = all(a > b for a, b in zip(moved, moved[1:])) and min(success) >= 0.85
    detail = " ".join(f"eps={r.epsilon:g}: moved={m:.3f} success={x:.3f}"
                      for r, m, x in zip(rows, moved, success))
    report(9, ok, detail)
    assert ok


# 10 -----------------------------------------------------------------------------------

def test_c10_reproducible(report, ddpg_run, out_root):
    first = ddpg_run[0].out_dir / "episodes.csv"
    cfg = replace(load_config(CONFIGS / "ddpg14.cfg"), out_dir=str(out_root / "ddpg_rerun"))
    train(cfg)
    second = out_root / "ddpg_rerun" / "episodes.csv"
    ok = first.read_bytes() == second.read_bytes()
    report(10, ok, f"episodes.csv rerun byte-identical={ok} ({first.stat().st_size} bytes)")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
