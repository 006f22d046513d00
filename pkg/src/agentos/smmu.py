"""Semantic memory-management unit: three-tier residency, page table, LRU-semantic eviction.

L1 is the bounded attention window (capacity in tokens), L2 the semantic RAM
and L3 an in-process cold store. Every state change of the page table is
reported as a trace event tagged with the smmu operation that caused it, so
the table can be rebuilt from a trace alone (:func:`replay_spt`).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

from .slicer import SemanticSlice, SliceStatus
from .trace import EventTrace, hex64


class SliceTooLarge(ValueError):
    pass


class EmptyLedger(ValueError):
    pass


class Tier(enum.Enum):
    L1 = "L1"
    L2 = "L2"
    L3 = "L3"


_STATUS_OF = {Tier.L1: SliceStatus.ACTIVE, Tier.L2: SliceStatus.PAGED_OUT, Tier.L3: SliceStatus.COLD}


@dataclass
class MemoryConfig:
    l1_capacity_tokens: int = 64
    recency_weight: float = 0.5
    l2_latency: int = 2
    l3_latency: int = 8
    l2_capacity_tokens: int | None = None

    def __post_init__(self):
        if self.l1_capacity_tokens < 1:
            raise ValueError("l1_capacity_tokens must be >= 1")
        if not 0.0 <= self.recency_weight <= 1.0:
            raise ValueError("recency_weight must lie in [0, 1]")
        if self.l2_latency < 0 or self.l3_latency < 0:
            raise ValueError("paging latencies must be >= 0")
        if self.l2_capacity_tokens is not None and self.l2_capacity_tokens < 0:
            raise ValueError("l2_capacity_tokens must be >= 0")


@dataclass
class SptEntry:
    slice_id: int
    location: Tier
    status: SliceStatus
    last_access: int
    access_count: int = 0

    def as_tuple(self):
        return (self.slice_id, self.location.value, self.status.value, self.last_access, self.access_count)


@dataclass
class UtilizationLedger:
    tokens_processed: int = 0
    gain_tokens: int = 0


@dataclass(frozen=True)
class EvictionEvent:
    slice_id: int
    semantic_hash: int
    i_eff: float
    tick: int
    source: Tier
    dest: Tier


def effective_importance(slice_: SemanticSlice, last_access: int, now: int, config: MemoryConfig) -> float:
    if now < last_access:
        raise ValueError(f"now={now} precedes last access {last_access}")
    recency = 1.0 / (1 + now - last_access)
    w = config.recency_weight
    return w * recency + (1.0 - w) * slice_.importance


def utilization_eta(ledger: UtilizationLedger) -> float:
    if ledger.tokens_processed <= 0:
        raise EmptyLedger("no tokens processed")
    return ledger.gain_tokens / ledger.tokens_processed


class SemanticMMU:
    def __init__(self, config: MemoryConfig, trace: EventTrace | None = None,
                 on_context_full: Callable[[list[EvictionEvent]], None] | None = None):
        self.config = config
        self.trace = trace if trace is not None else EventTrace()
        self.on_context_full = on_context_full
        self.spt: dict[int, SptEntry] = {}
        self.slices: dict[int, SemanticSlice] = {}
        self.l1: dict[int, SemanticSlice] = {}  # keyed by semantic hash, insertion ordered
        self.ledger = UtilizationLedger()

    # -- queries -----------------------------------------------------------

    @property
    def active_tokens(self) -> int:
        return sum(s.size for s in self.l1.values())

    def tier_tokens(self, tier: Tier) -> int:
        return sum(self.slices[h].size for h, e in self.spt.items() if e.location is tier)

    def location(self, h: int) -> Tier | None:
        entry = self.spt.get(h)
        return entry.location if entry else None

    def i_eff(self, h: int, now: int) -> float:
        return effective_importance(self.slices[h], self.spt[h].last_access, now, self.config)

    # -- internals ---------------------------------------------------------

    def _move(self, h: int, dest: Tier, now: int, op: str, ev: str) -> None:
        entry = self.spt[h]
        source = entry.location
        entry.location = dest
        entry.status = _STATUS_OF[dest]
        self.slices[h].status = entry.status
        if dest is Tier.L1:
            self.l1[h] = self.slices[h]
        elif source is Tier.L1:
            del self.l1[h]
        self.trace.emit(ev, now, hash=hex64(h), slice_id=entry.slice_id,
                        **{"from": source.value, "to": dest.value}, op=op)

    def _access(self, h: int, now: int, op: str) -> None:
        entry = self.spt[h]
        if entry.access_count == 0:
            self.ledger.gain_tokens += self.slices[h].size
        entry.access_count += 1
        entry.last_access = now
        self.trace.emit("access", now, hash=hex64(h), slice_id=entry.slice_id, op=op)

    def _victim(self, pool, now: int) -> int:
        return min(pool, key=lambda h: (self.i_eff(h, now), self.spt[h].slice_id))

    def _spill_l2(self, now: int) -> None:
        cap = self.config.l2_capacity_tokens
        if cap is None:
            return
        while self.tier_tokens(Tier.L2) > cap:
            pool = [h for h, e in self.spt.items() if e.location is Tier.L2]
            self._move(self._victim(pool, now), Tier.L3, now, "demote", "evict")

    def _fit(self, incoming: SemanticSlice, now: int, op: str) -> list[EvictionEvent]:
        k = self.config.l1_capacity_tokens
        if incoming.size > k:
            raise SliceTooLarge(f"slice of {incoming.size} tokens exceeds L1 capacity {k}")
        evicted = []
        while self.active_tokens + incoming.size > k:
            h = self._victim(self.l1, now)
            evicted.append(EvictionEvent(self.spt[h].slice_id, h, self.i_eff(h, now), now, Tier.L1, Tier.L2))
            self._move(h, Tier.L2, now, op, "evict")
        return evicted

    def _finish(self, evicted: list[EvictionEvent], now: int) -> None:
        self._spill_l2(now)
        if evicted and self.on_context_full is not None:
            self.on_context_full(evicted)

    # -- operations --------------------------------------------------------

    def manage_memory(self, incoming: SemanticSlice, now: int, thread: int | None = None) -> list[EvictionEvent]:
        """Admit a newly finalised slice into L1, evicting lowest effective importance first.

        A slice whose hash is already known is deduplicated: the existing entry
        is accessed (and paged in if needed) instead of creating a second one.
        """
        h = incoming.semantic_hash
        if h in self.spt:
            self.page_in(h, now, op="dedup")
            return []
        evicted = self._fit(incoming, now, "manage_memory")
        self.slices[h] = incoming
        self.spt[h] = SptEntry(incoming.slice_id, Tier.L1, SliceStatus.ACTIVE, now)
        incoming.status = SliceStatus.ACTIVE
        self.l1[h] = incoming
        self.ledger.tokens_processed += incoming.size
        self.trace.emit("insert", now, hash=hex64(h), slice_id=incoming.slice_id, tokens=incoming.size,
                        thread=thread, created_at=incoming.created_at, to="L1", op="manage_memory")
        self._finish(evicted, now)
        return evicted

    def page_in(self, h: int, now: int, op: str = "page_in") -> tuple[SemanticSlice, int] | None:
        """Bring a slice into L1; returns ``(slice, latency_ticks)`` or ``None`` after a fault event."""
        entry = self.spt.get(h)
        if entry is None:
            self.trace.emit("fault", now, hash=hex64(h), kind="UnknownHash", op=op)
            return None
        self._access(h, now, op)
        if entry.location is Tier.L1:
            return self.slices[h], 0
        latency = self.config.l2_latency if entry.location is Tier.L2 else self.config.l3_latency
        evicted = self._fit(self.slices[h], now, "manage_memory")
        self._move(h, Tier.L1, now, op, "page_in")
        self._finish(evicted, now)
        return self.slices[h], latency

    def store(self, h: int, now: int) -> None:
        """Write an active slice back to L2 (the STORE half of an interrupt cycle)."""
        if self.spt[h].location is Tier.L1:
            self._move(h, Tier.L2, now, "store", "evict")
            self._spill_l2(now)

    def demote(self, h: int, now: int) -> None:
        """Push a slice down to the cold store."""
        if self.spt[h].location is not Tier.L3:
            self._move(h, Tier.L3, now, "demote", "evict")

    def touch(self, h: int, now: int, op: str) -> bool:
        """Read access without residency change; False if the hash is unknown."""
        if h not in self.spt:
            self.trace.emit("fault", now, hash=hex64(h), kind="UnknownHash", op=op)
            return False
        self._access(h, now, op)
        return True

    def eta(self) -> float:
        return utilization_eta(self.ledger)

    def spt_snapshot(self) -> dict[str, tuple]:
        return {hex64(h): e.as_tuple() for h, e in sorted(self.spt.items())}


_SPT_EVENTS = {"insert", "evict", "page_in", "access"}


def replay_spt(events) -> dict[str, tuple]:
    """Rebuild the page table from smmu events in a trace."""
    spt: dict[str, list] = {}
    for e in events:
        ev = e["ev"]
        if ev not in _SPT_EVENTS:
            continue
        if "op" not in e:
            raise ValueError(f"page-table event without smmu op tag at tick {e['tick']}")
        h = e["hash"]
        if ev == "insert":
            spt[h] = [e["slice_id"], "L1", "Active", e["tick"], 0]
        elif ev == "access":
            spt[h][3] = e["tick"]
            spt[h][4] += 1
        else:
            tier = Tier(e["to"])
            spt[h][1] = tier.value
            spt[h][2] = _STATUS_OF[tier].value
    return {h: tuple(v) for h, v in sorted(spt.items())}
