"""Sync cost against inference gain as the agent count grows, with the collapse point."""

import argparse
import dataclasses
import sys

from agentos.config import ScenarioConfig, load_config
from agentos.experiments import experiment_sync_cost, loglog_slope


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config")
    ap.add_argument("--k", default="2,4,8,16,32")
    ap.add_argument("--pair-cost", type=float, default=1.0, help="cost units per pairwise reconciliation")
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    cfg = dataclasses.replace(cfg, sync=dataclasses.replace(cfg.sync, pair_cost=args.pair_cost))
    series = experiment_sync_cost([int(x) for x in args.k.split(",")], cfg)
    sys.stdout.write(series.to_csv())
    print(f"collapse point: {series.collapse_point}", file=sys.stderr)
    print(f"log-log slope of pairwise ops: {loglog_slope(series.column('k'), series.column('pairwise_ops')):.4f}",
          file=sys.stderr)


if __name__ == "__main__":
    main()
