"""Effort-shaping sweep over the 17 tap changers of the LTC fixture.

Trains one SAC agent per (weight, seed) and pools the test episodes of the seeds.
About four minutes per weight with the shipped config and three seeds.

    python3 scripts/effort.py --out runs/effort --epsilons 0,2,3 --replicates 3
"""
import argparse
from dataclasses import replace
from pathlib import Path

from avcbench.config import load_config
from avcbench.harness import effort_sweep, format_effort

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(CONFIGS / "effort_ltc.cfg"))
    ap.add_argument("--out", default="runs/effort")
    ap.add_argument("--epsilons", default="0,2,3")
    ap.add_argument("--replicates", type=int, default=3)
    args = ap.parse_args()
    cfg = replace(load_config(args.config), out_dir=args.out)
    eps = [float(x) for x in args.epsilons.split(",")]
    print(format_effort(effort_sweep(cfg, eps, replicates=args.replicates)), end="")


if __name__ == "__main__":
    main()
