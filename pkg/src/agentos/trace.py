"""Append-only event log and its JSONL encoding.

Floats are written with 17 significant digits so a parsed trace holds the
exact doubles that were logged; 64-bit ids are written as ``0x`` hex strings.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Iterable, Iterator


class MalformedTrace(ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line


def hex64(value: int) -> str:
    return f"0x{value:016x}"


def _encode(value: Any) -> str:
    if value is None:
        return "null"
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return '"nan"'
        if math.isinf(value):
            return '"inf"' if value > 0 else '"-inf"'
        text = f"{value:.17g}"
        if not any(c in text for c in ".en"):
            text += ".0"
        return text
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{_encode(v)}" for k, v in value.items()) + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_encode(v) for v in value) + "]"
    if hasattr(value, "tolist"):
        return _encode(value.tolist())
    raise TypeError(f"cannot encode {type(value).__name__}")


def dumps(obj: Any) -> str:
    return _encode(obj)


class EventTrace:
    def __init__(self):
        self.events: list[dict] = []

    def emit(self, ev: str, tick: int, **fields) -> dict:
        event = {"ev": ev, "tick": int(tick), **fields}
        self.events.append(event)
        return event

    def __iter__(self) -> Iterator[dict]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def of(self, *kinds: str) -> list[dict]:
        return [e for e in self.events if e["ev"] in kinds]

    def to_jsonl(self) -> str:
        return "".join(dumps(e) + "\n" for e in self.events)

    def write(self, path) -> None:
        Path(path).write_text(self.to_jsonl())


def parse_jsonl(lines: Iterable[str]) -> list[dict]:
    events = []
    no = 0
    for no, line in enumerate(lines, start=1):
        text = line.strip()
        if not text:
            continue
        try:
            event = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MalformedTrace(no, f"invalid JSON ({exc.msg})") from None
        if not isinstance(event, dict) or "ev" not in event or "tick" not in event:
            raise MalformedTrace(no, "event must be an object with 'ev' and 'tick'")
        events.append(event)
    if events and events[0]["ev"] == "begin" and events[-1]["ev"] != "end":
        raise MalformedTrace(no, "trace ends without its 'end' event (truncated)")
    return events


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return parse_jsonl(fh)
