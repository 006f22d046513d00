"""Reasoning kernel: token transitions, the interrupt cycle and the vector table.

A thread runs on the kernel one slot at a time. Each emitted token costs one
reasoning tick. A tool-request token starts the interrupt cycle:

    raise 0x01 -> STORE the active slice to L2 -> call the device (thread Blocked)
    -> on redispatch: perception-align the payload -> RELOAD the stored slice
    -> APPEND the aligned slice -> resume

Handler work (dispatch overhead, paging latency) and idle waiting are charged
as overhead ticks. All page-table changes go through :class:`SemanticMMU`.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import math
import struct
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .slicer import AttentionRow, SemanticSlice, cid, make_slice
from .smmu import SemanticMMU, Tier
from .synthrk import (
    MASK64,
    TOOL_TOKEN_BASE,
    Step,
    SyntheticRK,
    embed_token,
    tool_device,
    tool_device_of,
)
from .trace import EventTrace, hex64


class UnknownInterrupt(KeyError):
    pass


class AlignmentFailure(Exception):
    def __init__(self, cosine: float, threshold: float):
        super().__init__(f"cosine {cosine:.6f} below threshold {threshold}")
        self.cosine = cosine
        self.threshold = threshold


class EmptyOutput(ValueError):
    pass


class NoResume(LookupError):
    pass


class Priority(enum.IntEnum):
    MEDIUM = 1
    HIGH = 2
    CRITICAL = 3


SIG_TOOL_INVOKE = 0x01
SIG_CONTEXT_FULL = 0x02
SIG_SYNC_DRIFT = 0x03
SIG_PERCEPTION_ERR = 0x04


@dataclass(frozen=True)
class IvtEntry:
    irq: int
    name: str
    description: str
    priority: Priority
    handler: str


def default_ivt() -> dict[int, IvtEntry]:
    rows = [
        (SIG_TOOL_INVOKE, "SIG_TOOL_INVOKE", "Reasoning Kernel requests an external API/Tool call.",
         Priority.HIGH, "tool_cycle"),
        (SIG_CONTEXT_FULL, "SIG_CONTEXT_FULL", "L1 Cache has reached its attention capacity.",
         Priority.MEDIUM, "ack_context_full"),
        (SIG_SYNC_DRIFT, "SIG_SYNC_DRIFT", "Cognitive Drift has exceeded threshold epsilon.",
         Priority.HIGH, "sync_pulse"),
        (SIG_PERCEPTION_ERR, "SIG_PERCEPTION_ERR", "Output of tool does not match the current semantic schema.",
         Priority.CRITICAL, "discard_aligned"),
    ]
    return {r[0]: IvtEntry(*r) for r in rows}


@dataclass(order=True)
class PendingIrq:
    sort_key: tuple
    irq: int = field(compare=False)
    payload: dict = field(compare=False, default_factory=dict)


class InterruptQueue:
    """Ordered by priority (highest first), then arrival."""

    def __init__(self):
        self._heap: list[PendingIrq] = []
        self._seq = itertools.count()

    def push(self, irq: int, priority: Priority, payload: dict | None = None) -> None:
        heapq.heappush(self._heap, PendingIrq((-int(priority), next(self._seq)), irq, payload or {}))

    def pop(self) -> PendingIrq:
        return heapq.heappop(self._heap)

    def __len__(self) -> int:
        return len(self._heap)

    def ids(self) -> list[int]:
        return [p.irq for p in sorted(self._heap)]


def raise_interrupt(irq: int, ivt: dict[int, IvtEntry], queue: InterruptQueue, payload: dict | None = None):
    entry = ivt.get(irq)
    if entry is None:
        raise UnknownInterrupt(f"interrupt 0x{irq:02x} is not in the vector table")
    queue.push(irq, entry.priority, payload)
    return queue


class ThreadState(enum.Enum):
    READY = "Ready"
    RUNNING = "Running"
    BLOCKED = "Blocked"
    TERMINATED = "Terminated"


@dataclass
class CognitiveState:
    hidden: np.ndarray
    logical_clock: int = 0
    last_token: int = 0


@dataclass
class PendingIO:
    irq_tick: int
    ready_at: int
    payload: bytes
    stored: int  # semantic hash of the stored slice


@dataclass(eq=False)
class ReasoningControlBlock:
    thread_id: int
    rk: SyntheticRK
    priority: int = 0
    state: ThreadState = ThreadState.READY
    cognitive: CognitiveState | None = None
    active_slice: int | None = None
    semantic_stack_depth: int = 0
    pending_interrupt: int | None = None
    # runtime bookkeeping ------------------------------------------------
    owned: list[int] = field(default_factory=list)
    io: PendingIO | None = None
    tool_calls: int = 0
    waited: int = 0
    suspended_set: list[int] = field(default_factory=list)
    run_tokens: list[int] = field(default_factory=list)
    run_embeddings: list[np.ndarray] = field(default_factory=list)
    run_cids: list[float] = field(default_factory=list)
    prev_cid: float | None = None

    def __post_init__(self):
        if self.priority < 0:
            raise ValueError("priority must be >= 0")
        if self.cognitive is None:
            self.cognitive = CognitiveState(np.zeros(self.rk.params.dim))

    @classmethod
    def create(cls, thread_id: int, seed: int, params=None, priority: int = 0, **rk_kw):
        rk = SyntheticRK.seeded((seed ^ thread_id) & MASK64, params, **rk_kw)
        return cls(thread_id, rk, priority)


@dataclass
class KernelConfig:
    theta_align: float = 0.35
    dispatch_overhead: int = 1
    tool_latency: int = 3
    epsilon: float = 0.05
    max_slice_tokens: int | None = None
    attention_window: int | None = None

    def __post_init__(self):
        if self.dispatch_overhead < 0 or self.tool_latency < 0:
            raise ValueError("latencies must be >= 0")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")


def rk_step(rcb: ReasoningControlBlock, window: int | None = None) -> tuple[Step, float]:
    """One transition of the reasoning kernel: next token plus the CID of its attention row."""
    t = rcb.cognitive.logical_clock + 1
    weights = rcb.rk.gen_attention_row(t, window)
    step = rcb.rk.gen_step()
    cog = rcb.cognitive
    cog.hidden = 0.9 * cog.hidden + 0.1 * step.embedding
    cog.logical_clock = t
    cog.last_token = step.token_id
    return step, cid(AttentionRow(len(weights), weights))


def decode_payload(raw: bytes) -> list[int]:
    """Re-code raw device bytes into token ids (8-byte little-endian words, zero padded)."""
    if len(raw) % 8:
        raw = raw + bytes(8 - len(raw) % 8)
    return [w & (TOOL_TOKEN_BASE - 1) for (w,) in struct.iter_unpack("<Q", raw)]


def encode_tokens(token_ids) -> bytes:
    return b"".join(struct.pack("<Q", t) for t in token_ids)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape == b.shape and np.array_equal(a, b) and np.any(a):
        return 1.0
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return max(-1.0, min(1.0, float(np.dot(a, b)) / (na * nb)))


def perception_align(raw: bytes, current_schema, theta_align: float, slice_id: int = 0,
                     created_at: int = 0, thread: int | None = None) -> SemanticSlice:
    """Re-code tool output into a candidate slice and accept it only if it fits the schema.

    Importance of the aligned slice is its (non-negative) cosine to the schema.
    """
    if not raw:
        raise EmptyOutput("tool produced no output")
    schema = np.asarray(current_schema, dtype=float)
    tokens = decode_payload(raw)
    embeddings = [embed_token(t, schema.shape[0]) for t in tokens]
    candidate = make_slice(slice_id, (created_at, created_at), tokens, embeddings, [1.0],
                           created_at=created_at, thread=thread)
    cos = cosine(candidate.schema, schema)
    if cos < theta_align:
        raise AlignmentFailure(cos, theta_align)
    candidate.importance = max(0.0, cos)
    return candidate


def cognitive_latency(events, irq_event: dict) -> int:
    thread = irq_event.get("thread")
    for e in events:
        if e["ev"] == "resume" and e.get("thread") == thread and e["tick"] >= irq_event["tick"]:
            return e["tick"] - irq_event["tick"]
    raise NoResume(f"thread {thread} never resumed after tick {irq_event['tick']}")


def tool_cycles(events) -> list[tuple[dict, dict | None]]:
    """Pair each tool interrupt raise with the resume that closed it (None if still open)."""
    open_: dict[int, dict] = {}
    out = []
    for e in events:
        if e["ev"] == "irq" and e["id"] == SIG_TOOL_INVOKE and e["action"] == "raise":
            open_[e["thread"]] = e
        elif e["ev"] == "resume" and e["thread"] in open_:
            out.append((open_.pop(e["thread"]), e))
    out.extend((e, None) for e in open_.values())
    return out


class Kernel:
    def __init__(self, smmu: SemanticMMU, config: KernelConfig | None = None,
                 ivt: dict[int, IvtEntry] | None = None):
        self.smmu = smmu
        self.trace: EventTrace = smmu.trace
        self.config = config or KernelConfig()
        self.ivt = ivt or default_ivt()
        self.queue = InterruptQueue()
        self.clock = 0
        self.deadline: int | None = None
        self.reasoning_ticks = 0
        self.overhead_ticks = 0
        self.on_tick: Callable[[int], None] | None = None
        self.sync_handler: Callable[[dict], None] | None = None
        self._next_slice_id = 0
        smmu.on_context_full = lambda evicted: self.raise_irq(SIG_CONTEXT_FULL, evicted=len(evicted))

    # -- time ----------------------------------------------------------------

    @property
    def remaining(self) -> int:
        return math.inf if self.deadline is None else max(0, self.deadline - self.clock)

    def _tick(self, n: int) -> int:
        n = int(min(n, self.remaining))
        for _ in range(n):
            self.clock += 1
            if self.on_tick is not None:
                self.on_tick(self.clock)
        return n

    def charge_overhead(self, kind: str, n: int, thread: int | None = None) -> int:
        if n <= 0:
            return 0
        start = self.clock
        got = self._tick(n)
        if got:
            self.overhead_ticks += got
            self.trace.emit("overhead", start, kind=kind, ticks=got, thread=thread)
        return got

    # -- interrupts ----------------------------------------------------------

    def raise_irq(self, irq: int, thread: int | None = None, **payload) -> None:
        raise_interrupt(irq, self.ivt, self.queue, {"thread": thread, **payload})
        entry = self.ivt[irq]
        self.trace.emit("irq", self.clock, id=irq, name=entry.name, priority=entry.priority.name,
                        action="raise", thread=thread)

    def drain(self) -> None:
        while self.queue:
            pending = self.queue.pop()
            entry = self.ivt[pending.irq]
            self.trace.emit("irq", self.clock, id=pending.irq, name=entry.name, priority=entry.priority.name,
                            action="dispatch", thread=pending.payload.get("thread"))
            handler = pending.payload.get("handler")
            if handler is not None:
                handler()
            elif pending.irq == SIG_SYNC_DRIFT and self.sync_handler is not None:
                self.sync_handler(pending.payload)

    # -- slicing -------------------------------------------------------------

    def _new_slice_id(self) -> int:
        sid = self._next_slice_id
        self._next_slice_id += 1
        return sid

    def finalize_run(self, rcb: ReasoningControlBlock, end: int | None = None) -> int | None:
        """Close the thread's open token run (ending at logical position ``end``) into an L1 slice."""
        if not rcb.run_tokens:
            return None
        if end is None:
            end = rcb.cognitive.logical_clock
        start = end - len(rcb.run_tokens) + 1
        sl = make_slice(self._new_slice_id(), (start, end), rcb.run_tokens, rcb.run_embeddings,
                        rcb.run_cids, created_at=end, thread=rcb.thread_id)
        rcb.run_tokens, rcb.run_embeddings, rcb.run_cids = [], [], []
        return self._admit(rcb, sl)

    def _admit(self, rcb: ReasoningControlBlock, sl: SemanticSlice) -> int:
        self.smmu.manage_memory(sl, self.clock, thread=rcb.thread_id)
        h = sl.semantic_hash
        if h not in rcb.owned:
            rcb.owned.append(h)
        return h

    def _max_run(self) -> int:
        cap = self.smmu.config.l1_capacity_tokens
        return min(cap, self.config.max_slice_tokens or cap)

    def _observe(self, rcb: ReasoningControlBlock, step: Step, c: float) -> None:
        if rcb.run_tokens and rcb.prev_cid is not None and abs(c - rcb.prev_cid) > self.config.epsilon:
            # the boundary token opens the next slice, so close the run before it
            rcb.active_slice = self.finalize_run(rcb, rcb.cognitive.logical_clock - 1)
        rcb.prev_cid = c
        rcb.run_tokens.append(step.token_id)
        rcb.run_embeddings.append(step.embedding)
        rcb.run_cids.append(c)
        if len(rcb.run_tokens) >= self._max_run():
            rcb.active_slice = self.finalize_run(rcb)

    # -- interrupt cycle -----------------------------------------------------

    def _tool_top_half(self, rcb: ReasoningControlBlock, sigma: int, device: int, irq_tick: int) -> None:
        sid = self.smmu.spt[sigma].slice_id
        self.trace.emit("store", self.clock, thread=rcb.thread_id, slice_id=sid, hash=hex64(sigma))
        self.smmu.store(sigma, self.clock)
        self.charge_overhead("dispatch", self.config.dispatch_overhead, rcb.thread_id)
        rcb.tool_calls += 1
        payload, latency = tool_device(device, rcb.tool_calls, self.config.tool_latency)
        self.trace.emit("tool_call", self.clock, thread=rcb.thread_id, device=device,
                        ordinal=rcb.tool_calls, latency=latency, bytes=len(payload))
        rcb.io = PendingIO(irq_tick, self.clock + latency, payload, sigma)
        rcb.state = ThreadState.BLOCKED
        rcb.pending_interrupt = SIG_TOOL_INVOKE
        rcb.semantic_stack_depth += 1

    def _begin_tool(self, rcb: ReasoningControlBlock, step: Step) -> None:
        sigma = self.finalize_run(rcb)
        if sigma is None:
            sigma = rcb.active_slice  # the tool token itself just closed a full run
        rcb.active_slice = sigma
        irq_tick = self.clock
        device = tool_device_of(step.token_id)
        self.raise_irq(SIG_TOOL_INVOKE, rcb.thread_id,
                       handler=lambda: self._tool_top_half(rcb, sigma, device, irq_tick))
        self.drain()

    def _tool_bottom_half(self, rcb: ReasoningControlBlock) -> None:
        io = rcb.io
        sigma = io.stored
        stored = self.smmu.slices[sigma]
        self.smmu.touch(sigma, self.clock, op="align")
        aligned = None
        try:
            aligned = perception_align(io.payload, stored.schema, self.config.theta_align,
                                       created_at=rcb.cognitive.logical_clock, thread=rcb.thread_id)
            self.trace.emit("align_ok", self.clock, thread=rcb.thread_id, tokens=aligned.size,
                            cosine=aligned.importance)
        except (AlignmentFailure, EmptyOutput) as exc:
            self.trace.emit("align_err", self.clock, thread=rcb.thread_id,
                            cosine=getattr(exc, "cosine", None))
            self.raise_irq(SIG_PERCEPTION_ERR, rcb.thread_id)
        self.drain()
        src = self.smmu.location(sigma)
        _, latency = self.smmu.page_in(sigma, self.clock, op="reload")
        self.trace.emit("reload", self.clock, thread=rcb.thread_id, slice_id=stored.slice_id,
                        hash=hex64(sigma), **{"from": src.value})
        self.charge_overhead("paging", latency, rcb.thread_id)
        if aligned is not None:
            aligned.slice_id = self._new_slice_id()
            self._admit(rcb, aligned)
            self.trace.emit("append", self.clock, thread=rcb.thread_id, slice_id=aligned.slice_id,
                            hash=hex64(aligned.semantic_hash))
        rcb.active_slice = sigma
        rcb.io = None
        rcb.semantic_stack_depth -= 1
        self.trace.emit("resume", self.clock, thread=rcb.thread_id, irq_tick=io.irq_tick)
        self.drain()

    # -- execution -----------------------------------------------------------

    def poll(self, threads) -> None:
        """Unblock threads whose device call has completed."""
        for rcb in threads:
            if rcb.state is ThreadState.BLOCKED and rcb.io is not None and rcb.io.ready_at <= self.clock:
                rcb.state = ThreadState.READY
                rcb.pending_interrupt = None
                self.trace.emit("io_done", self.clock, thread=rcb.thread_id)

    def idle_until_ready(self, threads) -> int:
        waits = [r.io.ready_at for r in threads if r.state is ThreadState.BLOCKED and r.io is not None]
        if not waits:
            got = self.charge_overhead("idle", self.remaining if self.deadline is not None else 0)
        else:
            got = self.charge_overhead("idle", max(0, min(waits) - self.clock))
        self.poll(threads)
        return got

    def run_slot(self, rcb: ReasoningControlBlock, quantum: int) -> int:
        """Run one scheduling slot; returns kernel ticks spent on the thread."""
        if rcb.state not in (ThreadState.READY, ThreadState.RUNNING):
            raise ValueError(f"thread {rcb.thread_id} is {rcb.state.value}")
        start = self.clock
        rcb.state = ThreadState.RUNNING
        if rcb.io is not None:
            self._tool_bottom_half(rcb)
        window = self.config.attention_window or self.smmu.config.l1_capacity_tokens
        while self.clock - start < quantum and self.remaining > 0:
            step, c = rk_step(rcb, window)
            self.trace.emit("token", self.clock, thread=rcb.thread_id, token=hex64(step.token_id),
                            cid=c, tool=step.is_tool_request)
            self._tick(1)
            self.reasoning_ticks += 1
            self._observe(rcb, step, c)
            if step.is_tool_request:
                self._begin_tool(rcb, step)
                break
        if rcb.state is ThreadState.RUNNING:
            rcb.state = ThreadState.READY
        return self.clock - start

    def run_thread(self, rcb: ReasoningControlBlock, budget: int) -> EventTrace:
        """Drive a single thread for ``budget`` ticks, idling through its device waits."""
        first = len(self.trace)
        self.deadline = self.clock + budget
        while self.remaining > 0 and rcb.state is not ThreadState.TERMINATED:
            self.poll([rcb])
            if rcb.state is ThreadState.BLOCKED:
                self.idle_until_ready([rcb])
                continue
            self.run_slot(rcb, self.remaining)
        segment = EventTrace()
        segment.events = self.trace.events[first:]
        return segment

    def suspend(self, rcb: ReasoningControlBlock) -> None:
        """Finalise the open run and remember the thread's working slice if it is resident."""
        if rcb.run_tokens:
            rcb.active_slice = self.finalize_run(rcb)
        h = rcb.active_slice
        rcb.suspended_set = [h] if h is not None and self.smmu.location(h) is Tier.L1 else []

    def switch_in(self, rcb: ReasoningControlBlock) -> int:
        """Page back whatever the thread had resident at suspension but lost since; returns tokens."""
        displaced = [h for h in rcb.suspended_set if self.smmu.location(h) is not Tier.L1]
        for h in displaced:
            self.smmu.page_in(h, self.clock, op="switch")
        return sum(self.smmu.slices[h].size for h in displaced)
