"""Closed-loop scenario: kernel + scheduler + memory + multi-agent sync, and metrics from traces.

Every number in :class:`MetricsReport` is computed from trace events only, so
:func:`replay_trace` on a written JSONL file reproduces the live report.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .config import ScenarioConfig, config_to_dict
from .kernel import (
    SIG_SYNC_DRIFT,
    Kernel,
    ReasoningControlBlock,
    default_ivt,
    tool_cycles,
)
from .scheduler import Scheduler
from .smmu import SemanticMMU
from .sync import (
    AgentState,
    Decision,
    drift_step,
    global_reference,
    instantaneous_drift,
    sync_pulse,
    timing_policy,
)
from .synthrk import GOLDEN_GAMMA, MASK64, SplitMix64, SyntheticRK, agent_evolve
from .trace import EventTrace, read_jsonl

AGENT_STREAM = 0xA6E7


@dataclass
class MetricsReport:
    eta: float | None
    mean_latency: float | None
    gamma: float | None
    pulse_count: int
    conflict_count: int
    overhead_fraction: float
    tokens_processed: int = 0
    gain_tokens: int = 0
    interrupts: int = 0
    windows: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


class SyncMonitor:
    """Advances agent dynamics once per kernel tick and fires pulses per the configured policy."""

    def __init__(self, cfg: ScenarioConfig, kernel: Kernel, threads: list[ReasoningControlBlock]):
        self.cfg = cfg
        self.sync = cfg.sync
        self.kernel = kernel
        self.threads = threads
        self.trace = kernel.trace
        params = cfg.synthrk
        base = SplitMix64(cfg.seed ^ AGENT_STREAM)
        start = np.array([base.signed() for _ in range(params.dim)])
        start /= np.linalg.norm(start) or 1.0
        self.agents = []
        self.rks = []
        for i in range(cfg.agents):
            theta = (cfg.seed ^ (GOLDEN_GAMMA * (i + 1))) & MASK64
            self.agents.append(AgentState(i, start.copy(), theta=theta))
            self.rks.append(SyntheticRK(SplitMix64(theta), params))
        self.history: list[float] = []
        self.window_sup = 0.0
        self.window_ticks = 0
        self.windows = 0

    def psi(self) -> float:
        return max(a.drift_meter for a in self.agents)

    def __call__(self, tick: int) -> None:
        agents = self.agents
        ref = global_reference([a.hidden for a in agents])
        for a, rk in zip(agents, self.rks):
            a.hidden = agent_evolve(a.hidden, ref, rk)
        ref = global_reference([a.hidden for a in agents])
        deltas = []
        for a in agents:
            d = instantaneous_drift(a.hidden, ref)
            a.drift_meter = drift_step(a.drift_meter, a.last_delta, d, self.sync.lambda_, self.sync.dt)
            a.last_delta = d
            deltas.append(d)
        self.history.append(math.fsum(deltas) / len(deltas))
        psi = self.psi()
        self.window_sup = max(self.window_sup, psi)
        self.window_ticks += 1
        if len(agents) >= 2 and self._decide(tick, psi):
            self.kernel.raise_irq(SIG_SYNC_DRIFT, None, handler=lambda: self.pulse(tick, psi))
            self.kernel.drain()
        if self.window_ticks == self.cfg.window:
            self.close_window(tick)

    def _decide(self, tick: int, psi: float) -> bool:
        policy = self.sync.policy
        if policy.kind == "periodic":
            return tick % policy.period == 0
        return timing_policy(self.history, psi, self.sync) is Decision.SYNC_NOW

    def pulse(self, tick: int, psi: float) -> None:
        smmu = self.kernel.smmu
        captured = []
        for a in self.agents:
            owner = self.threads[a.agent_id % len(self.threads)]
            h = owner.active_slice
            if h is not None and h in smmu.slices:
                smmu.touch(h, tick, op="sync")
                captured.append(smmu.slices[h])
        result = sync_pulse(self.agents, tick, captured)
        self.trace.emit("csp", tick, agents=len(self.agents), conflicts=len(result.conflicts),
                        pairs=result.pairwise_ops, slices=len(result.slices), psi=psi)
        self.history.clear()

    def close_window(self, tick: int) -> None:
        if self.window_ticks:
            self.trace.emit("window", tick, index=self.windows, ticks=self.window_ticks, sup_psi=self.window_sup)
            self.windows += 1
        self.window_sup = 0.0
        self.window_ticks = 0


def build(cfg: ScenarioConfig, trace: EventTrace | None = None):
    trace = trace if trace is not None else EventTrace()
    smmu = SemanticMMU(cfg.memory, trace)
    kernel = Kernel(smmu, cfg.kernel_config(), default_ivt())
    prios = cfg.scheduler.priorities or [0] * cfg.threads
    threads = [ReasoningControlBlock.create(i, cfg.seed, cfg.synthrk, prios[i]) for i in range(cfg.threads)]
    return smmu, kernel, threads


def run_scenario(cfg: ScenarioConfig) -> tuple[EventTrace, MetricsReport]:
    trace = EventTrace()
    trace.emit("begin", 0, seed=cfg.seed, config=config_to_dict(cfg))
    smmu, kernel, threads = build(cfg, trace)
    monitor = SyncMonitor(cfg, kernel, threads)
    kernel.on_tick = monitor
    Scheduler(kernel, threads, cfg.scheduler).run(cfg.budget)
    monitor.close_window(kernel.clock)
    trace.emit("end", kernel.clock, reasoning_ticks=kernel.reasoning_ticks, overhead_ticks=kernel.overhead_ticks)
    return trace, compute_metrics(trace.events)


def compute_metrics(events) -> MetricsReport:
    eps_max = math.inf
    inserted: dict[int, int] = {}
    accessed: set[int] = set()
    windows = []
    pulses = conflicts = 0
    tokens = overhead = 0
    for e in events:
        ev = e["ev"]
        if ev == "begin":
            eps_max = float(e["config"]["sync"]["epsilon_max"])
        elif ev == "insert":
            inserted[e["slice_id"]] = e["tokens"]
        elif ev == "access":
            if e["slice_id"] in inserted:
                accessed.add(e["slice_id"])
        elif ev == "window":
            windows.append(e["sup_psi"])
        elif ev == "csp":
            pulses += 1
            conflicts += e["conflicts"]
        elif ev == "token":
            tokens += 1
        elif ev == "overhead":
            overhead += e["ticks"]
    processed = sum(inserted.values())
    gain = sum(inserted[s] for s in accessed)
    latencies = [done["tick"] - irq["tick"] for irq, done in tool_cycles(events) if done is not None]
    total = tokens + overhead
    return MetricsReport(
        eta=gain / processed if processed else None,
        mean_latency=math.fsum(latencies) / len(latencies) if latencies else None,
        gamma=sum(1 for s in windows if s < eps_max) / len(windows) if windows else None,
        pulse_count=pulses,
        conflict_count=conflicts,
        overhead_fraction=overhead / total if total else 0.0,
        tokens_processed=processed,
        gain_tokens=gain,
        interrupts=len(latencies),
        windows=len(windows),
    )


def replay_trace(path) -> MetricsReport:
    return compute_metrics(read_jsonl(path))


def audit_trace(events) -> list[str]:
    """Structural invariants a well-formed run must satisfy; returns human-readable violations."""
    problems = []
    priority = {e.irq: int(e.priority) for e in default_ivt().values()}
    pending: list[int] = []
    open_store: dict[int, int] = {}
    tokens = overhead = 0
    for no, e in enumerate(events, start=1):
        ev = e["ev"]
        if ev in ("insert", "evict", "page_in", "access") and "op" not in e:
            problems.append(f"event {no}: page-table change '{ev}' lacks an smmu op tag")
        elif ev == "irq":
            if e["action"] == "raise":
                pending.append(e["id"])
            else:
                p = priority[e["id"]]
                if any(priority[q] > p for q in pending):
                    problems.append(f"event {no}: 0x{e['id']:02x} dispatched while a higher priority irq was queued")
                if e["id"] in pending:
                    pending.remove(e["id"])
        elif ev == "store":
            if e["thread"] in open_store:
                problems.append(f"event {no}: nested STORE on thread {e['thread']}")
            open_store[e["thread"]] = e["slice_id"]
        elif ev == "reload":
            if open_store.pop(e["thread"], None) != e["slice_id"]:
                problems.append(f"event {no}: RELOAD without a matching STORE on thread {e['thread']}")
        elif ev == "token":
            tokens += 1
            if e["thread"] in open_store and not e["tool"]:
                problems.append(f"event {no}: thread {e['thread']} emitted a token before RELOAD")
        elif ev == "overhead":
            overhead += e["ticks"]
        elif ev == "end":
            if e["reasoning_ticks"] != tokens or e["overhead_ticks"] != overhead:
                problems.append("end totals disagree with per-event tick accounting")
            if tokens + overhead != e["tick"]:
                problems.append(f"ticks {tokens} + {overhead} do not sum to {e['tick']}")
    return problems
