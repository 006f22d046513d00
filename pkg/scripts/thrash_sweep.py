"""Overhead fraction vs thread count on the homogeneous workload; writes CSV to stdout or a file."""

import argparse
import sys

from agentos.config import ScenarioConfig, load_config
from agentos.experiments import experiment_thrash


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config")
    ap.add_argument("--n", default="1,2,3,4,5,6,8,16,32")
    ap.add_argument("--out")
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    series = experiment_thrash([int(x) for x in args.n.split(",")], cfg)
    text = series.to_csv()
    (open(args.out, "w").write(text) if args.out else sys.stdout.write(text))
    print(f"monotone: {series.monotone}", file=sys.stderr)


if __name__ == "__main__":
    main()
