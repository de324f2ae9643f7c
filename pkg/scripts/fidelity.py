"""Four impedance-error training conditions, all tested on exact models.

Writes fidelity.csv and incremental_loss.csv (per-test-episode loss difference against
the exact-model agent) under --out.

    python3 scripts/fidelity.py --out runs/fidelity [--line 2]
"""
import argparse
from dataclasses import replace
from pathlib import Path

from avcbench.config import load_config
from avcbench.harness import fidelity_experiment, format_fidelity

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(CONFIGS / "ddpg14.cfg"))
    ap.add_argument("--out", default="runs/fidelity")
    ap.add_argument("--line", type=int, help="branch for the single-line errors")
    args = ap.parse_args()
    cfg = replace(load_config(args.config), out_dir=args.out)
    print(format_fidelity(fidelity_experiment(cfg, line=args.line)), end="")


if __name__ == "__main__":
    main()
