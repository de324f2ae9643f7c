"""Train with a 10-branch N-1 pool, test on held-out N-1 and N-2 outages.

Prints the overall test summary and a per-outage success breakdown.

    python3 scripts/contingency.py --out runs/n1
"""
import argparse
from collections import defaultdict
from dataclasses import replace
from pathlib import Path

from avcbench.config import load_config
from avcbench.harness import train_and_evaluate

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(CONFIGS / "n1_ddpg14.cfg"))
    ap.add_argument("--out", default="runs/n1")
    args = ap.parse_args()
    result = train_and_evaluate(replace(load_config(args.config), out_dir=args.out))
    print(result.test_summary.report(), end="")
    by_outage = defaultdict(lambda: [0, 0])
    for r in result.test_records:
        if r.presolved:
            continue
        key = "-" if r.contingency is None else "+".join(map(str, r.contingency))
        by_outage[key][0] += r.success
        by_outage[key][1] += 1
    print("outage,successes,attempted")
    for key, (ok, n) in sorted(by_outage.items()):
        print(f"{key},{ok},{n}")


if __name__ == "__main__":
    main()
