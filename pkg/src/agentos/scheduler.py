"""Priority scheduling of reasoning threads with aging and a context-switch penalty model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .kernel import Kernel, ReasoningControlBlock, ThreadState
from .trace import EventTrace


class EmptyReadyQueue(LookupError):
    pass


@dataclass
class SchedulerConfig:
    quantum: int = 16
    switch_base: int = 2
    reload_bandwidth: int = 8
    aging_step: int = 1
    priorities: list[int] | None = None

    def __post_init__(self):
        if self.quantum < 1:
            raise ValueError("quantum must be >= 1")
        if self.reload_bandwidth < 1:
            raise ValueError("reload_bandwidth must be >= 1")
        if self.switch_base < 0 or self.aging_step < 0:
            raise ValueError("switch_base and aging_step must be >= 0")


@dataclass
class ThrashReport:
    threads: int
    reasoning_ticks: int
    overhead_ticks: int
    switches: int = 0
    switch_ticks: int = 0
    slots: int = 0
    # window after every thread's first dispatch, ending at the last slot the deadline did not cut
    steady_reasoning_ticks: int = 0
    steady_overhead_ticks: int = 0

    @property
    def total_ticks(self) -> int:
        return self.reasoning_ticks + self.overhead_ticks

    @property
    def overhead_fraction(self) -> float:
        total = self.total_ticks
        return self.overhead_ticks / total if total else 0.0

    @property
    def steady_overhead_fraction(self) -> float:
        total = self.steady_reasoning_ticks + self.steady_overhead_ticks
        return self.steady_overhead_ticks / total if total else 0.0


def effective_priority(rcb: ReasoningControlBlock, aging_step: int) -> int:
    return rcb.priority + aging_step * rcb.waited


def schedule_next(ready: Sequence[ReasoningControlBlock], aging_step: int = 0) -> int:
    """Thread id with the highest aged priority; ties go to the lowest thread id."""
    if not ready:
        raise EmptyReadyQueue("no thread is ready")
    best = max(ready, key=lambda r: (effective_priority(r, aging_step), -r.thread_id))
    return best.thread_id


def context_switch(from_thread: int | None, to_thread: int, reload_tokens: int, config: SchedulerConfig) -> int:
    """Penalty ticks for switching the kernel to another thread."""
    if from_thread is None or from_thread == to_thread:
        return 0
    return config.switch_base + math.ceil(reload_tokens / config.reload_bandwidth)


@dataclass
class Scheduler:
    kernel: Kernel
    threads: list[ReasoningControlBlock]
    config: SchedulerConfig = field(default_factory=SchedulerConfig)
    current: int | None = None

    def _by_id(self, tid: int) -> ReasoningControlBlock:
        return next(r for r in self.threads if r.thread_id == tid)

    def run(self, total_budget: int) -> ThrashReport:
        k = self.kernel
        k.deadline = k.clock + total_budget
        start_reason, start_over = k.reasoning_ticks, k.overhead_ticks
        report = ThrashReport(len(self.threads), 0, 0)
        seen: set[int] = set()
        steady_mark = None
        while k.remaining > 0:
            if steady_mark is None and len(seen) == len(self.threads):
                steady_mark = (k.reasoning_ticks, k.overhead_ticks)
            k.poll(self.threads)
            ready = [r for r in self.threads if r.state is ThreadState.READY]
            if not ready:
                if not k.idle_until_ready(self.threads) and all(
                        r.state is ThreadState.TERMINATED for r in self.threads):
                    break
                continue
            tid = schedule_next(ready, self.config.aging_step)
            rcb = self._by_id(tid)
            for r in ready:
                if r is not rcb:
                    r.waited += 1
            rcb.waited = 0
            if self.current is not None and tid != self.current:
                prev = self._by_id(self.current)
                k.suspend(prev)
                reload_tokens = k.switch_in(rcb)
                penalty = context_switch(self.current, tid, reload_tokens, self.config)
                k.trace.emit("switch", k.clock, **{"from": self.current, "to": tid},
                             reload_tokens=reload_tokens, penalty=penalty)
                report.switch_ticks += k.charge_overhead("switch", penalty, tid)
                report.switches += 1
            elif self.current is None:
                k.trace.emit("dispatch", k.clock, to=tid)
            self.current = tid
            seen.add(tid)
            if k.remaining > 0:
                k.run_slot(rcb, self.config.quantum)
                report.slots += 1
            if steady_mark is not None and k.remaining > 0:
                report.steady_reasoning_ticks = k.reasoning_ticks - steady_mark[0]
                report.steady_overhead_ticks = k.overhead_ticks - steady_mark[1]
        report.reasoning_ticks = k.reasoning_ticks - start_reason
        report.overhead_ticks = k.overhead_ticks - start_over
        return report


def run_schedule(kernel: Kernel, threads, total_budget: int, config: SchedulerConfig | None = None):
    sched = Scheduler(kernel, list(threads), config or SchedulerConfig())
    report = sched.run(total_budget)
    return report, kernel.trace
