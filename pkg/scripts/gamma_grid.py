"""Sync stability estimate over a grid of volatility and tolerance values."""

import argparse
import csv
import sys

from agentos.sync import GbmParams, SyncConfig, estimate_gamma


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sigmas", default="0.0,0.1,0.2,0.4,0.8")
    ap.add_argument("--eps", default="0.5,0.9,1.0,1.5,2.0,4.0")
    ap.add_argument("--trials", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--lambda", dest="lam", type=float, default=0.1)
    ap.add_argument("--dt", type=float, default=0.01)
    args = ap.parse_args()
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["sigma", "eps_max", "gamma", "std_error"])
    for s in map(float, args.sigmas.split(",")):
        for e in map(float, args.eps.split(",")):
            est = estimate_gamma(SyncConfig(lambda_=args.lam, epsilon_max=e, dt=args.dt),
                                 GbmParams(sigma=s), args.trials, args.seed)
            w.writerow([s, e, "%.6f" % est.gamma, "%.6f" % est.std_error])


if __name__ == "__main__":
    main()
