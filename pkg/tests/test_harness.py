import numpy as np
import pytest

from avcbench.config import RunConfig
from avcbench.harness import (ArchitectureMismatchError, EmptySummaryError, EpisodeRecord,
                              RecordWriter, crossval, effort_sweep, evaluate,
                              fidelity_conditions, fidelity_experiment, heaviest_branch,
                              read_records, summarize, train, train_and_evaluate, window_means)
from avcbench.powerflow import solve
from avcbench.scenario import ScenarioSpec, make_fold_plan

FAST = (("warmup", 20), ("batch_size", 16), ("hidden", (16,)))


def small(**kw):
    base = dict(algorithm="ddpg", train_episodes=12, test_episodes=6, seed=3,
                controlled_gens=(0, 1, 3, 4), agent_overrides=FAST)
    base.update(kw)
    return RunConfig(**base)


def rec(i, r_f=400.0, iterations=1, presolved=False, success=True, moved=1, loss=0.1):
    return EpisodeRecord(i, r_f, iterations, presolved, success, moved, loss, None,
                         "all_normal" if success else "violation", 0.2)


class TestRecords:
    def test_row_round_trip(self, tmp_path):
        recs = [rec(0), EpisodeRecord(1, -550.0, 2, False, False, 3, float("nan"), (4, 11),
                                      "severe", 0.1996)]
        with RecordWriter(tmp_path / "e.csv") as w:
            for r in recs:
                w.write(r)
        back = read_records(tmp_path / "e.csv")
        assert back[0] == recs[0]
        assert back[1].contingency == (4, 11) and np.isnan(back[1].loss)

    def test_partial_last_line_skipped(self, tmp_path):
        path = tmp_path / "e.csv"
        with RecordWriter(path) as w:
            w.write(rec(0))
            w.write(rec(1))
        path.write_text(path.read_text() + "2,400.0,1,0")
        assert [r.episode for r in read_records(path)] == [0, 1]

    def test_empty_summary(self):
        with pytest.raises(EmptySummaryError):
            summarize([])

    def test_summary_counts(self):
        recs = [rec(0, 500.0, 0, presolved=True, moved=0), rec(1), rec(2, -100.0, 10,
                success=False, moved=4), rec(3, 150.0, 2, moved=2)]
        s = summarize(recs)
        assert (s.episodes, s.presolved, s.attempted, s.successes) == (4, 1, 3, 2)
        assert s.success_rate == pytest.approx(2 / 3)
        assert s.within5_rate == pytest.approx(2 / 3)
        assert s.median_iterations == 2.0
        assert s.mean_r_f == pytest.approx((500 + 400 - 100 + 150) / 4)
        assert s.mean_devices_moved == pytest.approx(7 / 3)
        assert s.iteration_histogram == {0: 1, 1: 1, 2: 1, 10: 1}

    def test_window_means(self):
        recs = [rec(i, float(i)) for i in range(120)]
        means = window_means(recs)
        assert means == (24.5, 74.5, 109.5)
        assert summarize(recs).window_means == means

    def test_report_keys(self):
        text = summarize([rec(0)]).report()
        assert text.startswith("episodes=1\npresolved=0\n")


class TestTraining:
    def test_presolved_stream(self, tmp_path):
        cfg = RunConfig(algorithm="ddpg", case="twobus", train_episodes=5, test_episodes=3,
                        out_dir=str(tmp_path))
        result = train(cfg)
        assert result.summary.presolved == 5 and result.summary.attempted == 0
        assert all(r.r_f == 500.0 for r in result.records)
        assert np.isnan(result.summary.success_rate)

    def test_outputs_written(self, tmp_path):
        result = train_and_evaluate(small(out_dir=str(tmp_path)))
        for name in ("episodes.csv", "summary.txt", "agent.ckpt", "manifest.txt",
                     "test_episodes.csv", "test_summary.txt"):
            assert (tmp_path / name).exists(), name
        assert read_records(tmp_path / "episodes.csv") == result.records
        assert (tmp_path / "summary.txt").read_text() == result.summary.report()
        assert "algorithm=ddpg" in (tmp_path / "manifest.txt").read_text()

    def test_rerun_byte_identical(self, tmp_path):
        train(small(out_dir=str(tmp_path / "a")))
        train(small(out_dir=str(tmp_path / "b")))
        a = (tmp_path / "a" / "episodes.csv").read_bytes()
        assert a == (tmp_path / "b" / "episodes.csv").read_bytes()

    def test_noise_schedule_recorded(self):
        result = train(small())
        assert [r.explore_scale for r in result.records] == \
            [0.2 * 0.998 ** i for i in range(12)]

    def test_checkpoint_evaluation_matches_in_memory(self, tmp_path):
        result = train(small(out_dir=str(tmp_path)))
        a, _ = evaluate(result.agent, small())
        b, _ = evaluate(tmp_path / "agent.ckpt", small())
        assert a == b

    def test_architecture_mismatch(self, tmp_path):
        train(small(out_dir=str(tmp_path)))
        with pytest.raises(ArchitectureMismatchError):
            evaluate(tmp_path / "agent.ckpt", small(controlled_gens=(0, 1)))

    def test_evaluate_needs_scenarios(self):
        result = train(small())
        with pytest.raises(EmptySummaryError):
            evaluate(result.agent, small(), scenarios=[])

    def test_ltc_smoke(self):
        cfg = RunConfig(algorithm="sac", case="ieee14_ltc", train_episodes=4, test_episodes=2,
                        action_kind="ltc", ltc_relative=True, ltc_max_step=1,
                        scenario=ScenarioSpec(load_scale_range=(1.12, 1.22)),
                        agent_overrides=FAST)
        result = train_and_evaluate(cfg)
        assert result.test_summary.episodes == 2


class TestExperiments:
    def test_crossval_same_seed_identical(self):
        plan = make_fold_plan(42, 6, 4, n_folds=2)
        report = crossval(small(), plan, force_same_seed=True)
        assert report.folds[0] == report.folds[1]
        assert report.std_success == 0.0

    def test_heaviest_branch(self, ieee14):
        sol = solve(ieee14)
        k = heaviest_branch(ieee14)
        assert np.abs(sol.branch_flows[k]).max() == np.abs(sol.branch_flows).max()

    def test_fidelity_conditions(self, ieee14):
        names = [n for n, _ in fidelity_conditions(ieee14, line=3)]
        assert names == ["exact", "single_8pct", "single_20pct", "random_20pct"]

    def test_fidelity_rows(self, tmp_path):
        rows = fidelity_experiment(small(train_episodes=6, test_episodes=4, out_dir=str(tmp_path)))
        assert len(rows) == 4
        assert rows[0].incremental_loss == 0.0
        assert (tmp_path / "fidelity.csv").read_text().count("\n") == 5

    def test_single_weight_effort(self):
        cfg = RunConfig(algorithm="sac", case="ieee14_ltc", train_episodes=3, test_episodes=4,
                        action_kind="ltc", ltc_relative=True, ltc_max_step=1,
                        scenario=ScenarioSpec(load_scale_range=(1.12, 1.22)),
                        agent_overrides=FAST)
        rows = effort_sweep(cfg, [1.0])
        assert len(rows) == 1 and rows[0].epsilon == 1.0
        assert sum(rows[0].histogram_per_10k.values()) == pytest.approx(10_000)

    def test_effort_needs_ltc(self):
        with pytest.raises(ValueError):
            effort_sweep(small(), [0.0])

    def test_effort_replicates_pool(self):
        cfg = RunConfig(algorithm="sac", case="ieee14_ltc", train_episodes=2, test_episodes=3,
                        action_kind="ltc", ltc_relative=True, ltc_max_step=1,
                        scenario=ScenarioSpec(load_scale_range=(1.12, 1.22)),
                        agent_overrides=FAST)
        rows = effort_sweep(cfg, [0.0], replicates=2)
        assert rows[0].test.episodes == 6
