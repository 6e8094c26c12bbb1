#!/usr/bin/env python3
"""Compare all four protocols on the deep relay-chain scenario.

Runs a small campaign (5 seeds, 3 simulated days, uncorrelated harvest) on
the mh scenario family and prints the three network metrics per protocol.
The full-length version of this comparison lives in the acceptance tests;
this script is meant for a quick look at the numbers and takes well under
a minute.
"""
from __future__ import annotations

import numpy as np

from ewansim.campaign import run_campaign
from ewansim.metrics import METRIC_NAMES
from ewansim.scenario import build_scenario

PROTOCOLS = ("ewan", "single_hop", "multi_hop", "drb")
RUNS = 5


def main() -> None:
    sc = build_scenario("mh", rho=0.0, stream=np.random.default_rng(11),
                        days=3)
    depths = sc.hop_depths()
    print(f"mh scenario: {sc.n_nodes} nodes, hop depths 1..{max(depths.values())},"
          f" horizon {sc.horizon_s / 86400:.0f} days, {RUNS} runs each\n")

    camp = run_campaign(sc, PROTOCOLS, RUNS, master_seed=7)

    header = f"{'protocol':<12}" + "".join(f"{m:>12}" for m in METRIC_NAMES)
    print(header)
    print("-" * len(header))
    for proto in PROTOCOLS:
        row = f"{proto:<12}"
        for metric in METRIC_NAMES:
            row += f"{camp.mean(proto, metric):12.3f}"
        print(row)

    print("\nper-depth liveness (multi_hop baseline vs ewan):")
    for d in sorted(set(depths.values())):
        nodes = [v for v, dv in depths.items() if dv == d]
        mhb = np.mean([camp.runs[("multi_hop", i)][v].liveness
                       for i in range(RUNS) for v in nodes])
        ewan = np.mean([camp.runs[("ewan", i)][v].liveness
                        for i in range(RUNS) for v in nodes])
        print(f"  depth {d}: multi_hop {mhb:.2f}   ewan {ewan:.2f}")


if __name__ == "__main__":
    main()
