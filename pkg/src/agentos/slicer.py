"""Attention entropy, contextual information density and semantic slicing."""

from __future__ import annotations

import enum
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .synthrk import DimensionMismatch, embed_token

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_STOCHASTIC_TOL = 1e-9


class NonStochasticRow(ValueError):
    pass


class InvalidThreshold(ValueError):
    pass


class EmptySlice(ValueError):
    pass


class SliceStatus(enum.Enum):
    ACTIVE = "Active"
    PAGED_OUT = "PagedOut"
    COLD = "Cold"


@dataclass(frozen=True)
class AttentionRow:
    position: int
    weights: tuple[float, ...]

    def __init__(self, position: int, weights: Sequence[float]):
        object.__setattr__(self, "position", int(position))
        object.__setattr__(self, "weights", tuple(float(w) for w in weights))


@dataclass
class AttentionTrace:
    """``heads[h][t-1]`` is head ``h``'s row at position ``t``."""

    heads: list[list[AttentionRow]]

    def __post_init__(self):
        if not self.heads or not self.heads[0]:
            raise ValueError("attention trace must hold at least one head and one row")
        n = len(self.heads[0])
        for h, rows in enumerate(self.heads):
            if len(rows) != n:
                raise ValueError(f"head {h} has {len(rows)} rows, expected {n}")
            for t, row in enumerate(rows, start=1):
                if row.position != t or len(row.weights) != t:
                    raise ValueError(f"head {h} row {t} breaks the causal shape")

    @property
    def head_count(self) -> int:
        return len(self.heads)

    def __len__(self) -> int:
        return len(self.heads[0])

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]], heads: int = 1) -> "AttentionTrace":
        if heads < 1 or len(rows) % heads:
            raise ValueError(f"{len(rows)} rows cannot be split across {heads} heads")
        n = len(rows) // heads
        return cls([
            [AttentionRow(t + 1, rows[h * n + t]) for t in range(n)] for h in range(heads)
        ])


@dataclass(eq=False)
class SemanticSlice:
    slice_id: int
    token_range: tuple[int, int]
    token_ids: tuple[int, ...]
    semantic_hash: int
    schema: np.ndarray
    importance: float
    status: SliceStatus = SliceStatus.ACTIVE
    created_at: int = 0
    thread: int | None = None

    @property
    def size(self) -> int:
        return len(self.token_ids)


def _check_row(row: AttentionRow) -> None:
    w = row.weights
    if len(w) != row.position or row.position < 1:
        raise NonStochasticRow(f"row at position {row.position} has {len(w)} weights")
    if any(x < 0.0 or math.isnan(x) for x in w):
        raise NonStochasticRow(f"negative weight in row at position {row.position}")
    total = math.fsum(w)
    if abs(total - 1.0) > _STOCHASTIC_TOL:
        raise NonStochasticRow(f"row at position {row.position} sums to {total!r}")


def attention_entropy(row: AttentionRow) -> float:
    _check_row(row)
    h = -math.fsum(a * math.log(a) for a in row.weights if a > 0.0)
    return max(h, 0.0)


def cid(row: AttentionRow) -> float:
    """Contextual information density: one minus normalised attention entropy."""
    h = attention_entropy(row)
    t = row.position
    if t == 1:
        return 1.0
    return min(1.0, max(0.0, 1.0 - h / math.log(t)))


def cid_series(trace: AttentionTrace) -> list[float]:
    out = []
    for t in range(len(trace)):
        vals = []
        for h, rows in enumerate(trace.heads):
            try:
                vals.append(cid(rows[t]))
            except NonStochasticRow as exc:
                raise NonStochasticRow(f"head {h}, position {t + 1}: {exc}") from exc
        out.append(math.fsum(vals) / len(vals))
    return out


def jump_positions(series: Sequence[float], epsilon: float) -> list[int]:
    """Positions t >= 2 where |D(t) - D(t-1)| exceeds epsilon."""
    if not epsilon > 0.0:
        raise InvalidThreshold(f"epsilon must be > 0, got {epsilon!r}")
    return [t for t in range(2, len(series) + 1) if abs(series[t - 1] - series[t - 2]) > epsilon]


def detect_boundaries(series: Sequence[float], epsilon: float) -> list[int]:
    if len(series) < 2:
        raise ValueError("boundary detection needs at least two CID values")
    out = jump_positions(series, epsilon)
    if not out or out[-1] != len(series):
        out.append(len(series))
    return out


def semantic_hash(token_ids: Sequence[int]) -> int:
    """64-bit FNV-1a over each id as 8 little-endian bytes."""
    h = FNV_OFFSET
    for tok in token_ids:
        for b in struct.pack("<Q", tok):
            h ^= b
            h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def compress_state(embeddings: Sequence[Sequence[float]]) -> np.ndarray:
    if len(embeddings) == 0:
        raise EmptySlice("cannot compress an empty slice")
    dims = {len(v) for v in embeddings}
    if len(dims) != 1:
        raise DimensionMismatch(f"embedding dimensions differ: {sorted(dims)}")
    # fsum per component keeps the mean independent of input order
    arr = np.asarray(embeddings, dtype=float)
    return np.array([math.fsum(arr[:, k]) for k in range(arr.shape[1])]) / arr.shape[0]


def make_slice(slice_id, token_range, token_ids, embeddings, cids, created_at=0, thread=None):
    token_ids = tuple(int(t) for t in token_ids)
    return SemanticSlice(
        slice_id=slice_id,
        token_range=(int(token_range[0]), int(token_range[1])),
        token_ids=token_ids,
        semantic_hash=semantic_hash(token_ids),
        schema=compress_state(embeddings),
        importance=min(1.0, max(0.0, math.fsum(cids) / len(cids))),
        created_at=created_at,
        thread=thread,
    )


def finalize_slices(trace: AttentionTrace, token_ids, embeddings, epsilon, first_id=0):
    """Partition positions 1..n into slices at CID jumps.

    A jump at t opens a new slice starting at t; the sequence end closes the last one.
    """
    n = len(trace)
    if len(token_ids) != n or len(embeddings) != n:
        raise ValueError(f"lengths disagree: trace {n}, tokens {len(token_ids)}, embeddings {len(embeddings)}")
    series = cid_series(trace)
    starts = [1] + (jump_positions(series, epsilon) if n >= 2 else [])
    ends = [s - 1 for s in starts[1:]] + [n]
    return [
        make_slice(first_id + i, (a, b), token_ids[a - 1:b], embeddings[a - 1:b], series[a - 1:b], created_at=b)
        for i, (a, b) in enumerate(zip(starts, ends))
    ]


def load_attention_trace(path):
    """Read ``{"heads": H, "rows": [...]}`` with rows grouped head-major.

    Optional ``token_ids`` (length n) and ``embeddings`` (n vectors) ride along;
    when absent, token ids default to positions 1..n and embeddings come from
    the fixed token embedding map at ``dim`` (default 8).
    """
    doc = json.loads(Path(path).read_text())
    trace = AttentionTrace.from_rows(doc["rows"], int(doc.get("heads", 1)))
    n = len(trace)
    token_ids = [int(t) for t in doc.get("token_ids", range(1, n + 1))]
    if "embeddings" in doc:
        embeddings = [list(map(float, v)) for v in doc["embeddings"]]
    else:
        dim = int(doc.get("dim", 8))
        embeddings = [embed_token(t, dim) for t in token_ids]
    return trace, token_ids, embeddings
