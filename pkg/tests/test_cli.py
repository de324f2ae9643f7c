import subprocess
import sys

import pytest

from avcbench.cli import main
from avcbench.grid import load_case


def test_powerflow_table(capsys):
    assert main(["powerflow", "--case", "ieee14"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("converged in 4 iterations")
    assert "total loss 13.39" in out


def test_powerflow_key_value(capsys):
    assert main(["powerflow", "--case", "twobus", "--json"]) == 0
    assert capsys.readouterr().out.startswith("converged=true\n")


def test_powerflow_diverged_exit_code(tmp_path, capsys):
    path = tmp_path / "heavy.case"
    path.write_text("[meta]\nbase_mva 100\n[bus]\n1 slack 1.0\n2 pq -\n[branch]\n"
                    "1 2 0.0 0.1\n[load]\n2 8.0 4.0\n")
    assert main(["powerflow", "--case", str(path)]) == 3
    assert "DIVERGED" in capsys.readouterr().out


def test_bad_case_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.case"
    path.write_text("[bus]\n1 slack 1.0\n")
    assert main(["powerflow", "--case", str(path)]) == 2
    assert "avcbench: error" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path, capsys):
    path = tmp_path / "x.cfg"
    path.write_text("algorithm = ppo\n")
    assert main(["train", "--config", str(path)]) == 2


def test_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2


def test_train_and_eval(tmp_path, capsys):
    out = tmp_path / "run"
    args = ["--algo", "ddpg", "--episodes", "6", "--test-episodes", "3", "--seed", "1"]
    assert main(["train", *args, "--out", str(out)]) == 0
    assert "episodes=6" in capsys.readouterr().out
    assert main(["eval", *args, "--checkpoint", str(out / "agent.ckpt"),
                 "--out", str(tmp_path / "ev")]) == 0
    assert "episodes=3" in capsys.readouterr().out
    assert (tmp_path / "ev" / "episodes.csv").exists()


def test_eval_mismatched_checkpoint(tmp_path):
    out = tmp_path / "run"
    assert main(["train", "--algo", "ddpg", "--episodes", "2", "--out", str(out)]) == 0
    assert main(["eval", "--algo", "sac", "--checkpoint", str(out / "agent.ckpt")]) == 2


def test_scenario_sample(tmp_path, capsys):
    pool = tmp_path / "pool.txt"
    pool.write_text("0\n2\n")
    code = main(["scenario", "sample", "--case", "ieee14", "--count", "3", "--seed", "4",
                 "--contingency-file", str(pool), "--out", str(tmp_path / "sc")])
    assert code == 0
    files = sorted((tmp_path / "sc").glob("*.case"))
    assert len(files) == 6
    assert len(load_case(files[0]).in_service_branches()) == 19


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "avcbench", "--help"], capture_output=True,
                          text=True)
    assert proc.returncode == 0
    for cmd in ("train", "eval", "xval", "fidelity", "effort-sweep", "scenario", "powerflow"):
        assert cmd in proc.stdout
