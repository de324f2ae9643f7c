"""Fivefold seed cross-validation: five agents, one shared test stream.

    python3 scripts/crossval.py --algo ddpg --out runs/xval
"""
import argparse
from dataclasses import replace
from pathlib import Path

from avcbench.config import load_config
from avcbench.harness import crossval
from avcbench.scenario import make_fold_plan

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--algo", choices=("ddpg", "sac", "dqn"), default="ddpg")
    ap.add_argument("--out", default="runs/xval")
    ap.add_argument("--master-seed", type=int, default=42)
    ap.add_argument("--folds", type=int, default=5)
    args = ap.parse_args()
    cfg = replace(load_config(CONFIGS / f"{args.algo}14.cfg"), out_dir=args.out)
    plan = make_fold_plan(args.master_seed, cfg.train_episodes, cfg.test_episodes, args.folds)
    print(crossval(cfg, plan).report(), end="")


if __name__ == "__main__":
    main()
