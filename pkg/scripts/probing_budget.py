"""Closed-form probing figures: time until the first low-priority exploit
phase and the largest cedable share of the fair share, per alpha and D_exploit."""

import argparse

from reflexsim.core import PhaseConfig
from reflexsim.reflex import NeverExploits, spend_fraction, time_to_first_exploit


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--t-int", type=float, default=0.005)
    args = parser.parse_args()
    alphas = [0.5, 0.7, 0.8, 0.9, 0.95]
    print("time to first exploit (ms)")
    print("D_exploit " + " ".join(f"a={a:<5}" for a in alphas))
    for d in range(1, 11):
        cfg = PhaseConfig(args.t_int, 1, 1, d)
        cells = []
        for a in alphas:
            try:
                cells.append(f"{time_to_first_exploit(a, cfg) * 1e3:7.0f}")
            except NeverExploits:
                cells.append(f"{'never':>7}")
        print(f"{d:9d} " + " ".join(cells))
    print("\nspend fraction, weights 9:1, one competitor")
    for d in range(1, 11):
        cfg = PhaseConfig(args.t_int, 1, 1, d)
        print(f"{d:9d} {spend_fraction(cfg, 9, 1, 1):.4f}")


if __name__ == "__main__":
    main()
