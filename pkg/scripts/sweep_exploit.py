"""Regular short-flow FCT percentiles as the exploit phase grows.

One long flexible flow shares the link with 100 kB regular flows; the
speed-up is relative to the same workload without prioritization.
"""

import argparse

from reflexsim.core import Scheme
from reflexsim.engine import run
from reflexsim.metrics import summarize
from reflexsim.scenario import load_scenario


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--values", type=int, nargs="+", default=list(range(1, 11)))
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    sf = load_scenario("short_flows")
    window = (sf.sim.warmup_window, sf.sim.duration - sf.sim.cooldown_window)
    base = summarize(run(sf.with_scheme(Scheme.baseline()).build(args.seed)).records, window).groups["regular"]
    print(f"{'D_exploit':>9} {'median ms':>10} {'p90 ms':>8} {'p99 ms':>8}")
    print(f"{'baseline':>9} {base.median * 1e3:10.3f} {base.p90 * 1e3:8.3f} {base.p99 * 1e3:8.3f}")
    for d in args.values:
        recs = run(sf.with_phases(D_exploit=d).build(args.seed)).records
        st = summarize(recs, window).groups["regular"]
        print(f"{d:9d} {st.median * 1e3:10.3f} {st.p90 * 1e3:8.3f} {st.p99 * 1e3:8.3f}")


if __name__ == "__main__":
    main()
