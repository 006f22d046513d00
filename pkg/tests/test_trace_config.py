import json
import math

import pytest

from agentos.config import ConfigError, ScenarioConfig, config_from_dict, config_to_dict, load_config
from agentos.trace import EventTrace, MalformedTrace, dumps, hex64, parse_jsonl, read_jsonl


def test_floats_round_trip_exactly():
    vals = [0.1, 1 / 3, 2.0 ** -1074, 1e308, -0.0, 123456789.123456789]
    line = dumps({"v": vals})
    back = json.loads(line)["v"]
    assert back == vals and all(math.copysign(1, a) == math.copysign(1, b) for a, b in zip(back, vals))


def test_whole_floats_keep_float_form():
    assert dumps({"x": 2.0}) == '{"x":2.0}'
    assert dumps({"x": math.inf}) == '{"x":"inf"}'


def test_hex64_is_fixed_width():
    assert hex64(1) == "0x0000000000000001"
    assert hex64(2 ** 64 - 1) == "0xffffffffffffffff"


def test_emit_orders_keys():
    t = EventTrace()
    t.emit("token", 3, thread=1)
    assert t.to_jsonl() == '{"ev":"token","tick":3,"thread":1}\n'


def test_write_read_round_trip(tmp_path):
    t = EventTrace()
    t.emit("begin", 0)
    t.emit("x", 1, v=0.25)
    t.emit("end", 2)
    p = tmp_path / "t.jsonl"
    t.write(p)
    assert read_jsonl(p) == t.events


@pytest.mark.parametrize("lines, lineno", [
    (['{"ev":"a","tick":0}', '{"ev":'], 2),
    (['{"tick":0}'], 1),
    (['{"ev":"begin","tick":0}', '{"ev":"x","tick":1}'], 2),
])
def test_malformed_traces(lines, lineno):
    with pytest.raises(MalformedTrace) as info:
        parse_jsonl(lines)
    assert info.value.line == lineno


def test_default_config_round_trips():
    cfg = ScenarioConfig()
    assert config_from_dict(json.loads(json.dumps(config_to_dict(cfg)))) == cfg


def test_lambda_key_and_nested_policy():
    cfg = config_from_dict({"sync": {"lambda": 0.5, "policy": {"kind": "periodic", "period": 7}}})
    assert cfg.sync.lambda_ == 0.5 and cfg.sync.policy.period == 7


@pytest.mark.parametrize("doc, path", [
    ({"bogus": 1}, "bogus"),
    ({"memory": {"K": 3}}, "memory.K"),
    ({"memory": {"l1_capacity_tokens": "big"}}, "memory.l1_capacity_tokens"),
    ({"sync": {"policy": {"kind": "sometimes"}}}, "sync.policy"),
    ({"kernel": {"epsilon": 0.2}}, "kernel.epsilon"),
    ({"threads": 2, "scheduler": {"priorities": [1]}}, ""),
    ({"sync": {"dt": 0}}, "sync"),
])
def test_config_errors_carry_paths(doc, path):
    with pytest.raises(ConfigError) as info:
        config_from_dict(doc)
    assert info.value.path == path


def test_load_config_errors(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_reference_scenario_file_is_valid():
    from pathlib import Path
    cfg = load_config(Path(__file__).parents[1] / "scenarios" / "reference.json")
    assert cfg.seed == 42
