"""Deterministic synthetic reasoning kernel.

Everything random in the simulator is drawn from splitmix64 so a run is
reproducible bit-for-bit from its seed. The generator stands in for an LLM:
it emits tokens, embeddings, causal attention rows with planted anchors,
agent hidden-state dynamics and tool-device payloads.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
TWO_NEG_53 = 2.0 ** -53

# Token ids at or above this value are tool requests; the low bits carry the device id.
TOOL_TOKEN_BASE = 1 << 63
N_TOOL_DEVICES = 4
MAX_TOOL_TOKENS = 4


class DimensionMismatch(ValueError):
    pass


def splitmix64_next(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns ``(new_state, output)``."""
    state = (state + GOLDEN_GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


class SplitMix64:
    """Single-owner splitmix64 stream with the uniform/normal recipes used everywhere."""

    def __init__(self, seed: int):
        self.seed = seed & MASK64
        self.state = self.seed

    def next_u64(self) -> int:
        self.state, out = splitmix64_next(self.state)
        return out

    def uniform(self) -> float:
        """Uniform in the open interval (0, 1); zero draws are redrawn."""
        while True:
            u = (self.next_u64() >> 11) * TWO_NEG_53
            if u != 0.0:
                return u

    def signed(self) -> float:
        return 2.0 * self.uniform() - 1.0

    def normal(self) -> float:
        # Marsaglia polar method; the spare variate is discarded so every
        # language reproduces the same sequence without hidden state.
        while True:
            x = 2.0 * self.uniform() - 1.0
            y = 2.0 * self.uniform() - 1.0
            s = x * x + y * y
            if 0.0 < s < 1.0:
                return x * math.sqrt(-2.0 * math.log(s) / s)

    def fork(self, stream_id: int) -> "SplitMix64":
        return SplitMix64(self.seed ^ (stream_id & MASK64))


def embed_token(token_id: int, dim: int) -> np.ndarray:
    """Fixed embedding map: ``dim`` values in [-1, 1] from a stream keyed by the token id."""
    rng = SplitMix64(token_id)
    return np.array([rng.signed() for _ in range(dim)])


def is_tool_token(token_id: int) -> bool:
    return token_id >= TOOL_TOKEN_BASE


def tool_device_of(token_id: int) -> int:
    return token_id - TOOL_TOKEN_BASE


def tool_device(device_id: int, call_ordinal: int, latency: int) -> tuple[bytes, int]:
    """Deterministic peripheral stub: payload keyed by (device, ordinal), plus its latency."""
    rng = SplitMix64(((device_id & 0xFFFFFFFF) << 32) ^ (call_ordinal & 0xFFFFFFFF))
    n_words = 1 + rng.next_u64() % MAX_TOOL_TOKENS
    payload = b"".join(struct.pack("<Q", rng.next_u64()) for _ in range(n_words))
    return payload, latency


@dataclass
class GeneratorParams:
    anchor_prob: float = 0.05
    anchor_mass: float = 0.5
    tool_prob: float = 0.02
    noise_scale: float = 0.05
    dim: int = 8

    def __post_init__(self):
        if not 0.0 <= self.anchor_prob <= 1.0:
            raise ValueError("anchor_prob must lie in [0, 1]")
        if not 0.0 <= self.tool_prob <= 1.0:
            raise ValueError("tool_prob must lie in [0, 1]")
        if not 0.0 < self.anchor_mass < 1.0:
            raise ValueError("anchor_mass must lie in (0, 1)")
        if self.noise_scale < 0.0:
            raise ValueError("noise_scale must be >= 0")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")


@dataclass
class Step:
    token_id: int
    embedding: np.ndarray
    is_tool_request: bool


@dataclass
class SyntheticRK:
    """Generator state for one reasoning stream.

    ``tool_schedule`` overrides the random tool draw: when given, exactly the
    listed 1-based step ordinals emit tool requests (used by scripted workloads).
    """

    prng: SplitMix64
    params: GeneratorParams = field(default_factory=GeneratorParams)
    tool_schedule: frozenset[int] | None = None
    anchors: list[int] = field(default_factory=list)
    steps: int = 0

    @classmethod
    def seeded(cls, seed: int, params: GeneratorParams | None = None, **kw) -> "SyntheticRK":
        return cls(SplitMix64(seed), params or GeneratorParams(), **kw)

    def gen_attention_row(self, t: int, window: int | None = None) -> list[float]:
        """Causal attention row for position ``t``.

        With ``window`` the row covers only the last ``min(t, window)`` positions
        and an anchor that has slid out of the window falls back to position t.
        """
        if t < 1:
            raise ValueError("row position must be >= 1")
        n = t if window is None else min(t, window)
        first = t - n + 1
        e = [-math.log(self.prng.uniform()) for _ in range(n)]
        if self.prng.uniform() < self.params.anchor_prob:
            self.anchors.append(t)
        target = t
        if self.anchors and first <= self.anchors[-1] <= t:
            target = self.anchors[-1]
        beta = self.params.anchor_mass
        total = math.fsum(e)
        row = [(1.0 - beta) * x / total for x in e]
        row[target - first] += beta
        norm = math.fsum(row)
        return [x / norm for x in row]

    def gen_step(self) -> Step:
        self.steps += 1
        token = self.prng.next_u64() & (TOOL_TOKEN_BASE - 1)
        draw = self.prng.uniform()
        if self.tool_schedule is not None:
            tool = self.steps in self.tool_schedule
        else:
            tool = draw < self.params.tool_prob
        if tool:
            token = TOOL_TOKEN_BASE + self.prng.next_u64() % N_TOOL_DEVICES
        return Step(token, embed_token(token, self.params.dim), tool)

    def noise(self) -> np.ndarray:
        return np.array([self.prng.signed() for _ in range(self.params.dim)])


def agent_evolve(h: np.ndarray, global_signal: np.ndarray, rk: SyntheticRK) -> np.ndarray:
    """One step of agent dynamics: contraction toward the global signal plus bounded noise."""
    h = np.asarray(h, dtype=float)
    g = np.asarray(global_signal, dtype=float)
    if h.shape != g.shape or h.shape[0] != rk.params.dim:
        raise DimensionMismatch(f"{h.shape} vs {g.shape} (dim {rk.params.dim})")
    nxt = 0.9 * h + 0.1 * g + rk.params.noise_scale * rk.noise()
    norm = float(np.linalg.norm(nxt))
    if norm == 0.0:
        return nxt
    return nxt / norm
