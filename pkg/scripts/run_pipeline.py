"""Train a policy on one case, then evaluate, benchmark and write the report.

    python scripts/run_pipeline.py --case mvdc12 --episodes 50000 --out runs/mvdc12
    python scripts/run_pipeline.py --case toy3 --episodes 2000 --out runs/toy3
"""

import argparse
import sys

from preventive_ems.cli import main


def parse_args(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--case", default="mvdc12")
    ap.add_argument("--episodes", type=int, default=50000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--alpha", type=float, default=0.95)
    ap.add_argument("--out", default="runs/out")
    return ap.parse_args(argv)


def run(args) -> int:
    common = ["--case", args.case, "--out", args.out, "--seed", str(args.seed), "--alpha", str(args.alpha)]
    steps = [
        ["validate"],
        ["powerflow"],
        ["scenarios"],
        ["train", "--episodes", str(args.episodes)],
        ["evaluate"],
        ["evaluate", "--mode", "base"],
        ["evaluate", "--mode", "resilient-opt"],
        ["benchmark"],
        ["report"],
    ]
    for step in steps:
        print("$ preventive-ems", " ".join(step), flush=True)
        code = main(step + common)
        if code != 0:
            print(f"step {step[0]} exited with {code}", file=sys.stderr)
            return code
    return 0


if __name__ == "__main__":
    sys.exit(run(parse_args()))
