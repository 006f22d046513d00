"""Multi-agent drift, cognitive sync pulses, timing policy and stability estimation.

Drift between two latent states is their Euclidean distance; cumulative drift
is the exponentially discounted time integral of it. The stability index is the
probability that cumulative drift stays below a bound over a horizon, estimated
by Monte Carlo either on a parametric geometric-Brownian distance process or on
an ensemble of simulated agents.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .slicer import SemanticSlice
from .synthrk import (
    GOLDEN_GAMMA,
    MASK64,
    TWO_NEG_53,
    DimensionMismatch,
    GeneratorParams,
    SplitMix64,
    SyntheticRK,
    agent_evolve,
)


class UnsortedSeries(ValueError):
    pass


class TooFewAgents(ValueError):
    pass


class InvalidParams(ValueError):
    pass


@dataclass
class SyncConfig:
    lambda_: float = 0.1
    epsilon_drift: float = 1.0
    epsilon_max: float = 2.0
    soft_threshold: float = 0.3
    dt: float = 0.05
    pair_cost: float = 0.0

    def __post_init__(self):
        if self.lambda_ < 0:
            raise ValueError("lambda must be >= 0")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not self.epsilon_max > 0:
            raise ValueError("epsilon_max must be > 0")
        if self.pair_cost < 0:
            raise ValueError("pair_cost must be >= 0")


@dataclass(eq=False)
class AgentState:
    agent_id: int
    hidden: np.ndarray
    local_slices: list[SemanticSlice] = field(default_factory=list)
    drift_meter: float = 0.0
    theta: int = 0
    last_delta: float = 0.0


@dataclass(frozen=True)
class GammaEstimate:
    gamma: float
    trials: int
    std_error: float


@dataclass(frozen=True)
class GbmParams:
    delta0: float = 1.0
    mu: float = 0.0
    sigma: float = 0.2
    horizon: float = 1.0


@dataclass(frozen=True)
class ConflictEvent:
    logical_time: int
    kept: int
    dropped: tuple[int, ...]


@dataclass
class PulseResult:
    hidden: np.ndarray
    slices: list[SemanticSlice]
    conflicts: list[ConflictEvent]
    pairwise_ops: int


class Decision(enum.Enum):
    SYNC_NOW = "SyncNow"
    WAIT = "Wait"


# -- drift ------------------------------------------------------------------

def instantaneous_drift(ha, hb) -> float:
    a = np.asarray(ha, dtype=float)
    b = np.asarray(hb, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    return math.sqrt(math.fsum((x - y) ** 2 for x, y in zip(a.tolist(), b.tolist())))


def total_drift(delta_series: Sequence[tuple[float, float]], lambda_: float, T: float) -> float:
    """Trapezoidal quadrature of exp(-lambda (T - tau)) * delta(tau) over the samples."""
    taus = [float(t) for t, _ in delta_series]
    if any(b < a for a, b in zip(taus, taus[1:])):
        raise UnsortedSeries("delta series must be sorted by time")
    f = [math.exp(-lambda_ * (T - t)) * float(d) for t, d in delta_series]
    return math.fsum(0.5 * (taus[i + 1] - taus[i]) * (f[i] + f[i + 1]) for i in range(len(f) - 1))


def drift_step(psi: float, prev_delta: float, delta: float, lambda_: float, dt: float) -> float:
    """Advance cumulative drift by one trapezoid step of width dt."""
    decay = math.exp(-lambda_ * dt)
    return decay * psi + 0.5 * dt * (decay * prev_delta + delta)


def global_reference(hiddens: Sequence[np.ndarray]) -> np.ndarray:
    arr = np.asarray(hiddens, dtype=float)
    dims = arr.shape[1] if arr.ndim == 2 else None
    if dims is None:
        raise DimensionMismatch("agent hidden vectors differ in dimension")
    # shifted mean: identical agents map exactly onto themselves
    base = arr[0]
    return base + np.array([math.fsum(arr[:, k] - base[k]) for k in range(dims)]) / arr.shape[0]


def multi_agent_drift(agents: Sequence[AgentState], global_ref=None) -> list[float]:
    hiddens = [a.hidden for a in agents]
    ref = global_reference(hiddens) if global_ref is None else np.asarray(global_ref, dtype=float)
    return [instantaneous_drift(h, ref) for h in hiddens]


def max_pairwise_drift(agents: Sequence[AgentState]) -> float:
    hs = [a.hidden for a in agents]
    return max((instantaneous_drift(hs[i], hs[j]) for i in range(len(hs)) for j in range(i + 1, len(hs))),
               default=0.0)


# -- sync pulse ---------------------------------------------------------------

def aggregate_slices(captured: Sequence[SemanticSlice]) -> tuple[list[SemanticSlice], list[ConflictEvent]]:
    """Union deduplicated by hash; distinct slices at the same logical time keep the most important."""
    unique: dict[int, SemanticSlice] = {}
    for s in captured:
        unique.setdefault(s.semantic_hash, s)
    groups: dict[int, list[SemanticSlice]] = {}
    for s in unique.values():
        groups.setdefault(s.created_at, []).append(s)
    kept, conflicts = [], []
    for tau in sorted(groups):
        group = groups[tau]
        best = max(group, key=lambda s: (s.importance, -s.slice_id))
        kept.append(best)
        if len(group) > 1:
            conflicts.append(ConflictEvent(tau, best.slice_id,
                                           tuple(sorted(s.slice_id for s in group if s is not best))))
    return kept, conflicts


def sync_pulse(agents: Sequence[AgentState], logical_time: int = 0,
               captured: Sequence[SemanticSlice] | None = None) -> PulseResult:
    """Barrier: capture every agent, reconcile, rebroadcast one state, reset drift meters.

    ``captured`` are the agents' active slices; defaults to each agent's last local slice.
    """
    k = len(agents)
    if k < 2:
        raise TooFewAgents(f"a sync pulse needs at least 2 agents, got {k}")
    # suspend + capture
    hiddens = [np.array(a.hidden, dtype=float) for a in agents]
    if captured is None:
        captured = [a.local_slices[-1] for a in agents if a.local_slices]
    # resolve
    unified = global_reference(hiddens)
    slices, conflicts = aggregate_slices(captured)
    # rebroadcast + reset; resume is the caller continuing its loop
    for a in agents:
        a.hidden = unified.copy()
        known = {s.semantic_hash for s in a.local_slices}
        a.local_slices.extend(s for s in slices if s.semantic_hash not in known)
        a.drift_meter = 0.0
        a.last_delta = 0.0
    return PulseResult(unified, slices, conflicts, k * (k - 1) // 2)


# -- timing policy --------------------------------------------------------------

def timing_policy(delta_history: Sequence[float], drift: float, config: SyncConfig) -> Decision:
    """Sync at a confirmed local minimum of delta once armed, or unconditionally past the hard bound."""
    if drift >= config.epsilon_drift:
        return Decision.SYNC_NOW
    if drift >= config.soft_threshold and len(delta_history) >= 3:
        a, b, c = delta_history[-3:]
        if a > b < c:
            return Decision.SYNC_NOW
    return Decision.WAIT


# -- stability estimation ---------------------------------------------------------

def _check_gbm(params: GbmParams, config: SyncConfig, trials: int) -> int:
    if trials < 1:
        raise InvalidParams("trials must be >= 1")
    if not params.delta0 > 0:
        raise InvalidParams("delta0 must be > 0")
    if params.sigma < 0 or not params.horizon > 0:
        raise InvalidParams("sigma must be >= 0 and horizon > 0")
    return max(1, int(round(params.horizon / config.dt)))


def gbm_sup_drift_path(params: GbmParams, config: SyncConfig, seed: int, trial: int) -> float:
    """Reference single-path simulation; the vectorised estimator must agree with it to rounding."""
    steps = _check_gbm(params, config, 1)
    rng = SplitMix64(seed ^ trial)
    dt = config.dt
    drift = (params.mu - 0.5 * params.sigma ** 2) * dt
    vol = params.sigma * math.sqrt(dt)
    delta, psi, sup = params.delta0, 0.0, 0.0
    for _ in range(steps):
        nxt = delta * math.exp(drift + vol * rng.normal())
        psi = drift_step(psi, delta, nxt, config.lambda_, dt)
        sup = max(sup, psi)
        delta = nxt
    return sup


def _mix(state: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    state = state + np.uint64(GOLDEN_GAMMA)
    z = state.copy()
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return state, z ^ (z >> np.uint64(31))


class _VectorStreams:
    """Many splitmix64 streams advanced in lockstep; each lane draws only when masked in."""

    def __init__(self, seeds: np.ndarray):
        self.state = seeds.astype(np.uint64)

    def uniform(self, mask: np.ndarray) -> np.ndarray:
        out = np.zeros(self.state.shape[0])
        need = mask.copy()
        while need.any():
            new_state, z = _mix(self.state[need])
            self.state[need] = new_state
            u = (z >> np.uint64(11)).astype(np.float64) * TWO_NEG_53
            idx = np.flatnonzero(need)
            out[idx] = u
            need[idx[u != 0.0]] = False
        return out

    def normal(self) -> np.ndarray:
        n = self.state.shape[0]
        out = np.zeros(n)
        pending = np.ones(n, dtype=bool)
        while pending.any():
            x = 2.0 * self.uniform(pending) - 1.0
            y = 2.0 * self.uniform(pending) - 1.0
            s = x * x + y * y
            ok = pending & (s > 0.0) & (s < 1.0)
            out[ok] = x[ok] * np.sqrt(-2.0 * np.log(s[ok]) / s[ok])
            pending &= ~ok
        return out


def gbm_sup_drift(params: GbmParams, config: SyncConfig, trials: int, seed: int) -> np.ndarray:
    """Per-trial supremum of cumulative drift, trials advanced together."""
    steps = _check_gbm(params, config, trials)
    seeds = np.array([(seed ^ i) & MASK64 for i in range(trials)], dtype=np.uint64)
    streams = _VectorStreams(seeds)
    dt = config.dt
    drift = (params.mu - 0.5 * params.sigma ** 2) * dt
    vol = params.sigma * math.sqrt(dt)
    decay = math.exp(-config.lambda_ * dt)
    delta = np.full(trials, float(params.delta0))
    psi = np.zeros(trials)
    sup = np.zeros(trials)
    with np.errstate(over="ignore"):
        for _ in range(steps):
            nxt = delta * np.exp(drift + vol * streams.normal())
            psi = decay * psi + 0.5 * dt * (decay * delta + nxt)
            np.maximum(sup, psi, out=sup)
            delta = nxt
    return sup


def _estimate(sups: np.ndarray, eps_max: float) -> GammaEstimate:
    n = int(sups.shape[0])
    if math.isinf(eps_max) and eps_max > 0:
        return GammaEstimate(1.0, n, 0.0)
    p = float(np.count_nonzero(sups < eps_max)) / n
    return GammaEstimate(p, n, math.sqrt(p * (1.0 - p) / n))


def estimate_gamma(config: SyncConfig, params: GbmParams, trials: int, seed: int) -> GammaEstimate:
    """Monte-Carlo probability that sup cumulative drift stays below ``config.epsilon_max``."""
    return _estimate(gbm_sup_drift(params, config, trials, seed), config.epsilon_max)


def gamma_curve(config: SyncConfig, params: GbmParams, trials: int, seed: int, eps_grid) -> list[GammaEstimate]:
    sups = gbm_sup_drift(params, config, trials, seed)
    return [_estimate(sups, e) for e in eps_grid]


def ensemble_sup_drift(config: SyncConfig, agents: int, steps: int, trials: int, seed: int,
                       params: GeneratorParams | None = None) -> np.ndarray:
    """Sup over time of the largest agent drift meter, for unsynchronised simulated agents."""
    params = params or GeneratorParams()
    out = np.zeros(trials)
    for trial in range(trials):
        base = SplitMix64(seed ^ trial)
        start = np.array([base.signed() for _ in range(params.dim)])
        start /= np.linalg.norm(start) or 1.0
        rks = [SyntheticRK(base.fork(GOLDEN_GAMMA * (i + 1)), params) for i in range(agents)]
        hs = [start.copy() for _ in range(agents)]
        psi = [0.0] * agents
        prev = [0.0] * agents
        sup = 0.0
        for _ in range(steps):
            ref = global_reference(hs)
            hs = [agent_evolve(h, ref, rk) for h, rk in zip(hs, rks)]
            ref = global_reference(hs)
            for i, h in enumerate(hs):
                d = instantaneous_drift(h, ref)
                psi[i] = drift_step(psi[i], prev[i], d, config.lambda_, config.dt)
                prev[i] = d
            sup = max(sup, max(psi))
        out[trial] = sup
    return out


def estimate_gamma_ensemble(config: SyncConfig, agents: int, steps: int, trials: int, seed: int,
                            params: GeneratorParams | None = None) -> GammaEstimate:
    return _estimate(ensemble_sup_drift(config, agents, steps, trials, seed, params), config.epsilon_max)
