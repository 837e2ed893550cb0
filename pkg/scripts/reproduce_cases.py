"""Two-flow cases on one 10 Gbit/s link under every scheme.

Prints the mean rate of each flow while both are active, in calculation mode
(efficiency 1, instant convergence) and in simulation mode (efficiency 0.96,
1 ms convergence).
"""

import argparse

from reflexsim.core import Scheme
from reflexsim.engine import Engine
from reflexsim.scenario import load_scenario

SCHEMES = [Scheme.baseline(), Scheme.absolute(), Scheme.weighted(9, 1), Scheme.reflex()]


def competition(sc):
    """Mean rates of both flows from the second arrival to the first completion."""
    eng = Engine(sc)
    start = sc.flows[1].arrival_time
    eng.run_until(start)
    eng.step()
    before = {rt.spec.flow_id: rt.delivered for rt in eng.active}
    t0 = eng.clock
    while not eng.done:
        eng.step()
    after = {rt.spec.flow_id: rt.delivered for rt in eng.active + eng.done}
    span = eng.clock - t0
    return tuple((after[f] - before[f]) * 8 / span for f in (0, 1))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.parse_args()
    print(f"{'case':6} {'mode':5} {'scheme':14} {'first Gbit/s':>12} {'second Gbit/s':>13}")
    for case in ("case1", "case2"):
        sf = load_scenario(case)
        for mode, variant in (("calc", sf), ("sim", sf.with_efficiency(0.96).with_sim(conv_tau=1e-3))):
            for scheme in SCHEMES:
                a, b = competition(variant.with_scheme(scheme).build())
                print(f"{case:6} {mode:5} {scheme.label:14} {a / 1e9:12.3f} {b / 1e9:13.3f}")


if __name__ == "__main__":
    main()
