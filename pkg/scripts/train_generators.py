"""Train DDPG, SAC and DQN on the 14-bus generator task and compare test success.

    python3 scripts/train_generators.py --out runs/gen14 [--episodes 2000]
"""
import argparse
from dataclasses import replace
from pathlib import Path

from avcbench.config import load_config
from avcbench.harness import train_and_evaluate

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/gen14")
    ap.add_argument("--episodes", type=int)
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()
    print("algorithm,success_rate,within5_rate,median_iterations,mean_r_f")
    for algo in ("ddpg", "sac", "dqn"):
        cfg = load_config(CONFIGS / f"{algo}14.cfg")
        cfg = replace(cfg, out_dir=str(Path(args.out) / algo))
        if args.episodes:
            cfg = replace(cfg, train_episodes=args.episodes)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        s = train_and_evaluate(cfg).test_summary
        print(f"{algo},{s.success_rate:.4f},{s.within5_rate:.4f},{s.median_iterations:g},"
              f"{s.mean_r_f:.2f}", flush=True)


if __name__ == "__main__":
    main()
