"""Parameter sweeps: context-switch overhead vs thread count, and sync cost vs agent count."""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .config import ScenarioConfig
from .scheduler import run_schedule
from .scenario import build, run_scenario


@dataclass
class Series:
    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)
    traces: dict = field(default_factory=dict, repr=False, compare=False)  # x value -> EventTrace

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow(["%.17g" % v if isinstance(v, float) else v for v in row])
        return buf.getvalue()

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]


@dataclass
class ThrashSeries(Series):
    columns: tuple[str, ...] = ("N", "overhead_fraction")

    @property
    def monotone(self) -> bool:
        ys = self.column("overhead_fraction")
        return all(a <= b for a, b in zip(ys, ys[1:]))


@dataclass
class SyncCostSeries(Series):
    columns: tuple[str, ...] = ("k", "pulses", "pairwise_ops", "cum_sync_cost", "cum_inference_gain")
    collapse_point: int | str = "none"


def homogeneous_config(base: ScenarioConfig, threads: int) -> ScenarioConfig:
    """Identical threads: no tool calls, no CID boundaries, pure-recency eviction, equal priority.

    Each thread then finalises exactly one quantum-sized slice per suspension, so L1 holds
    floor(K / quantum) thread working sets and switch reloads start once N exceeds that.
    """
    return dataclasses.replace(
        base,
        threads=threads,
        agents=1,
        slicer=dataclasses.replace(base.slicer, epsilon=math.inf, max_slice_tokens=None),
        memory=dataclasses.replace(base.memory, recency_weight=1.0),
        scheduler=dataclasses.replace(base.scheduler, priorities=None),
        synthrk=dataclasses.replace(base.synthrk, tool_prob=0.0),
    )


def experiment_thrash(n_list, config: ScenarioConfig | None = None) -> ThrashSeries:
    base = config or ScenarioConfig()
    out = ThrashSeries()
    for n in n_list:
        cfg = homogeneous_config(base, n)
        _, kernel, threads = build(cfg)
        report, trace = run_schedule(kernel, threads, cfg.budget, cfg.scheduler)
        out.traces[n] = trace
        out.rows.append((n, report.steady_overhead_fraction))
    return out


def experiment_sync_cost(k_list, config: ScenarioConfig | None = None) -> SyncCostSeries:
    base = config or ScenarioConfig()
    ks = list(k_list)
    if ks != sorted(ks):
        raise ValueError("k_list must be ascending")
    out = SyncCostSeries()
    for k in ks:
        trace, metrics = run_scenario(dataclasses.replace(base, agents=k))
        out.traces[k] = trace
        pulses = trace.of("csp")
        ops = pulses[0]["pairs"] if pulses else k * (k - 1) // 2
        cost = len(pulses) * ops * base.sync.pair_cost
        gain = metrics.gain_tokens
        out.rows.append((k, len(pulses), ops, float(cost), gain))
        if out.collapse_point == "none" and cost > gain:
            out.collapse_point = k
    return out


def loglog_slope(xs, ys) -> float:
    """Least-squares slope of log y against log x."""
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    lx -= lx.mean()
    return float(np.dot(lx, ly - ly.mean()) / np.dot(lx, lx))
