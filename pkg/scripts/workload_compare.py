"""Desk-scale workload comparison across seeds.

Runs the chosen workload under the baseline, ReFlex at each requested alpha
and fixed 9-1 weighted priority, then prints min/mean/max across seeds of the
regular mean-FCT speed-up and the share of flexible flows slowed below 0.8.
"""

import argparse
import statistics
from concurrent.futures import ProcessPoolExecutor

from reflexsim.core import Scheme
from reflexsim.engine import run
from reflexsim.metrics import compare_runs, in_window
from reflexsim.scenario import load_scenario


def one(job):
    name, label, alpha, seed = job
    sf = load_scenario(name)
    if label == "baseline":
        sf = sf.with_scheme(Scheme.baseline())
    elif label == "weighted-9-1":
        sf = sf.with_scheme(Scheme.weighted(9, 1))
    else:
        sf = sf.with_flexible(alpha=alpha)
    window = (sf.sim.warmup_window, sf.sim.duration - sf.sim.cooldown_window)
    return [r for r in run(sf.build(seed)).records if in_window(r, *window)]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("workload", nargs="?", default="workload1")
    parser.add_argument("--alphas", type=float, nargs="+", default=[0.8])
    parser.add_argument("--seeds", type=int, default=3)
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args()
    variants = [("baseline", None), ("weighted-9-1", None)] + [(f"reflex-a{a:g}", a) for a in args.alphas]
    jobs = [(args.workload, label, alpha, seed) for seed in range(args.seeds) for label, alpha in variants]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]
    by = {(j[1], j[3]): res for j, res in zip(jobs, results)}
    print(f"{'scheme':14} {'regular speed-up (min/mean/max)':>34} {'flexible < 0.8 (min/mean/max)':>32}")
    for label, _ in variants[1:]:
        speed, viol = [], []
        for seed in range(args.seeds):
            s, v = compare_runs(by[("baseline", seed)], by[(label, seed)])
            speed.append(s["regular.mean_fct"])
            viol.append(v["flexible.below_0.8"])
        fmt = lambda xs: f"{min(xs):.3f}/{statistics.fmean(xs):.3f}/{max(xs):.3f}"  # noqa: E731
        print(f"{label:14} {fmt(speed):>34} {fmt(viol):>32}")


if __name__ == "__main__":
    main()
