"""Scenario configuration: nested dataclasses loaded from JSON with strict key checking."""

from __future__ import annotations

import dataclasses
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .kernel import KernelConfig
from .scheduler import SchedulerConfig
from .smmu import MemoryConfig
from .synthrk import MAX_TOOL_TOKENS, GeneratorParams
from .sync import SyncConfig


class ConfigError(ValueError):
    def __init__(self, path: str, reason: str):
        super().__init__(f"{path or '<root>'}: {reason}")
        self.path = path


@dataclass
class SlicerConfig:
    epsilon: float = 0.08
    max_slice_tokens: int | None = None


@dataclass
class PolicyConfig:
    kind: str = "advantageous"
    period: int = 50

    def __post_init__(self):
        if self.kind not in ("periodic", "advantageous"):
            raise ValueError("kind must be 'periodic' or 'advantageous'")
        if self.period < 1:
            raise ValueError("period must be >= 1")


@dataclass
class ScenarioSync(SyncConfig):
    policy: PolicyConfig = field(default_factory=PolicyConfig)


@dataclass
class ScenarioConfig:
    seed: int = 42
    agents: int = 4
    threads: int = 2
    budget: int = 2000
    window: int = 100
    slicer: SlicerConfig = field(default_factory=SlicerConfig)
    memory: MemoryConfig = field(default_factory=MemoryConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    sync: ScenarioSync = field(default_factory=ScenarioSync)
    synthrk: GeneratorParams = field(default_factory=GeneratorParams)

    def __post_init__(self):
        if self.agents < 1 or self.threads < 1:
            raise ValueError("agents and threads must be >= 1")
        if self.budget < 0 or self.window < 1:
            raise ValueError("budget must be >= 0 and window >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.memory.l1_capacity_tokens < MAX_TOOL_TOKENS:
            raise ValueError(f"memory.l1_capacity_tokens must be >= {MAX_TOOL_TOKENS} (largest tool payload)")
        if self.kernel.epsilon != KernelConfig.epsilon or self.kernel.max_slice_tokens is not None:
            raise ValueError("set the boundary threshold and slice cap under 'slicer', not 'kernel'")
        prios = self.scheduler.priorities
        if prios is not None and len(prios) != self.threads:
            raise ValueError("scheduler.priorities needs one entry per thread")

    def kernel_config(self) -> KernelConfig:
        return dataclasses.replace(self.kernel, epsilon=self.slicer.epsilon,
                                   max_slice_tokens=self.slicer.max_slice_tokens)


_SLICER_OWNED = ("epsilon", "max_slice_tokens")


def _key(f: dataclasses.Field) -> str:
    return f.name.rstrip("_")


def _build(cls, data, path: str):
    hints = typing.get_type_hints(cls)
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected an object for {cls.__name__}")
    fields = {_key(f): f for f in dataclasses.fields(cls)}
    if cls is KernelConfig:
        for moved in _SLICER_OWNED:
            if moved in data:
                raise ConfigError(f"{path}.{moved}", "belongs under 'slicer'")
            fields.pop(moved)
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}".lstrip("."), "unknown key")
    kwargs = {}
    for key, value in data.items():
        f = fields[key]
        sub = f"{path}.{key}".lstrip(".")
        kwargs[f.name] = _coerce(hints[f.name], value, sub)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(path, str(exc)) from None


def _coerce(tp, value, path: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union or origin is types.UnionType:
        if value is None and type(None) in args:
            return None
        tp = next(a for a in args if a is not type(None))
        origin, args = typing.get_origin(tp), typing.get_args(tp)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path)
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(path, "expected a list")
        return [_coerce(args[0], v, f"{path}[{i}]") for i, v in enumerate(value)]
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, "expected a boolean")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, "expected an integer")
        return value
    if tp is float:
        if isinstance(value, str) and value in ("inf", "Infinity"):
            return float("inf")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, "expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, "expected a string")
        return value
    return value


def config_from_dict(data: dict) -> ScenarioConfig:
    return _build(ScenarioConfig, data, "")


def load_config(path) -> ScenarioConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON: {exc.msg} (line {exc.lineno})") from None
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from None
    return config_from_dict(data)


def config_to_dict(cfg) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        if isinstance(cfg, KernelConfig) and f.name in _SLICER_OWNED:
            continue
        v = getattr(cfg, f.name)
        out[_key(f)] = config_to_dict(v) if dataclasses.is_dataclass(v) else v
    return out
