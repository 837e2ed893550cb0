"""Fraction delivered and regular-flow rate as the flexible flow's r varies."""

import argparse
import csv
import sys

from reflexsim.engine import run
from reflexsim.scenario import load_scenario


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--step", type=float, default=0.05)
    parser.add_argument("--alpha", type=float, default=1.0)
    args = parser.parse_args()
    sf = load_scenario("partial_delivery").with_flexible(alpha=args.alpha)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["r", "fraction_delivered", "flexible_fct_s", "regular_rate_gbps"])
    n = round(1 / args.step)
    for k in range(n + 1):
        r = round(k * args.step, 6)
        res = run(sf.with_flexible(r=r).build())
        flex, reg = res.record(0), res.record(1)
        writer.writerow([r, f"{flex.fraction_delivered:.4f}", f"{flex.fct:.4f}", f"{reg.mean_rate / 1e9:.3f}"])


if __name__ == "__main__":
    main()
