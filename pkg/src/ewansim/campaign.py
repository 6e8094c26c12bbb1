"""Monte Carlo campaigns: repeated runs, shared traces, aggregation.

Run i of every protocol draws its harvesting traces from a stream that
depends only on (master_seed, i), so protocols compared at the same run
index experience identical harvesting conditions.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .metrics import METRIC_NAMES, NodeMetrics, compute_all_metrics
from .protocol.run import PROTOCOLS, simulate_run


@dataclass
class CampaignResult:
    protocols: Tuple[str, ...]
    n_runs: int
    master_seed: int
    n_nodes: int
    # (protocol, run_index) -> {node: NodeMetrics}
    runs: Dict[Tuple[str, int], Dict[int, NodeMetrics]] = field(default_factory=dict)

    def metric_samples(self, protocol: str, metric: str) -> List[float]:
        """One value per (run, node), runs outer, nodes inner."""
        out = []
        for i in range(self.n_runs):
            per_node = self.runs[(protocol, i)]
            for node in sorted(per_node):
                out.append(per_node[node].value(metric))
        return out

    def node_samples(self, protocol: str, node: int, metric: str) -> List[float]:
        return [self.runs[(protocol, i)][node].value(metric)
                for i in range(self.n_runs)]

    def mean(self, protocol: str, metric: str) -> float:
        return float(np.mean(self.metric_samples(protocol, metric)))


def run_campaign(scenario, protocols: Sequence[str], n_runs: int,
                 master_seed: int) -> CampaignResult:
    """Simulate every protocol n_runs times and keep only the metrics."""
    protocols = tuple(protocols)
    for p in protocols:
        if p not in PROTOCOLS:
            raise ValueError(f"unknown protocol: {p}")
    if n_runs < 1:
        raise ValueError("a campaign needs at least one run")
    out = CampaignResult(protocols=protocols, n_runs=n_runs,
                         master_seed=master_seed, n_nodes=scenario.n_nodes)
    for protocol in protocols:
        for i in range(n_runs):
            result = simulate_run(scenario, protocol, master_seed, run_index=i)
            out.runs[(protocol, i)] = compute_all_metrics(result)
    return out


def _quartiles(values: Sequence[float]) -> Tuple[float, float, float]:
    q1, q2, q3 = np.percentile(values, [25.0, 50.0, 75.0])
    return float(q1), float(q2), float(q3)


def aggregate_network(result: CampaignResult) -> List[dict]:
    """One row per (protocol, metric) over all run x node samples."""
    rows = []
    for protocol in result.protocols:
        for metric in METRIC_NAMES:
            vals = result.metric_samples(protocol, metric)
            q1, q2, q3 = _quartiles(vals)
            rows.append({
                "protocol": protocol, "metric": metric,
                "mean": float(np.mean(vals)),
                "q1": q1, "median": q2, "q3": q3,
                "n_samples": len(vals),
            })
    return rows


def aggregate_per_node(result: CampaignResult) -> List[dict]:
    """One row per (protocol, node, metric), distribution over runs."""
    rows = []
    for protocol in result.protocols:
        for node in range(1, result.n_nodes + 1):
            for metric in METRIC_NAMES:
                vals = result.node_samples(protocol, node, metric)
                q1, q2, q3 = _quartiles(vals)
                rows.append({
                    "protocol": protocol, "node": node, "metric": metric,
                    "mean": float(np.mean(vals)),
                    "q1": q1, "median": q2, "q3": q3,
                })
    return rows


def write_campaign_csvs(result: CampaignResult, out_dir: str) -> List[str]:
    """Write aggregate.csv and pernode.csv; returns the paths."""
    import os
    os.makedirs(out_dir, exist_ok=True)
    agg_path = os.path.join(out_dir, "aggregate.csv")
    with open(agg_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["protocol", "metric", "mean", "q1", "median", "q3",
                         "n_samples"])
        for row in aggregate_network(result):
            writer.writerow([row["protocol"], row["metric"], repr(row["mean"]),
                             repr(row["q1"]), repr(row["median"]),
                             repr(row["q3"]), row["n_samples"]])
    per_path = os.path.join(out_dir, "pernode.csv")
    with open(per_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["protocol", "node", "metric", "mean", "q1", "median",
                         "q3"])
        for row in aggregate_per_node(result):
            writer.writerow([row["protocol"], row["node"], row["metric"],
                             repr(row["mean"]), repr(row["q1"]),
                             repr(row["median"]), repr(row["q3"])])
    return [agg_path, per_path]
