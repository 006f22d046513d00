import dataclasses
import json
from pathlib import Path

import pytest

from agentos.config import PolicyConfig, ScenarioConfig, ScenarioSync, load_config
from agentos.experiments import experiment_sync_cost, experiment_thrash, homogeneous_config, loglog_slope
from agentos.scenario import MetricsReport, audit_trace, compute_metrics, replay_trace, run_scenario
from agentos.synthrk import GeneratorParams
from agentos.trace import MalformedTrace

ROOT = Path(__file__).parents[1]


def small(**kw):
    kw.setdefault("budget", 600)
    return ScenarioConfig(**kw)


def test_single_agent_never_pulses():
    _, m = run_scenario(small(agents=1))
    assert m.pulse_count == 0 and m.gamma == 1.0


def test_noiseless_periodic_sync_keeps_drift_zero():
    cfg = small(agents=3, synthrk=GeneratorParams(noise_scale=0.0),
                sync=ScenarioSync(policy=PolicyConfig(kind="periodic", period=1)))
    trace, m = run_scenario(cfg)
    assert m.gamma == 1.0
    assert all(w["sup_psi"] == 0.0 for w in trace.of("window"))
    assert m.pulse_count == cfg.budget


def test_reference_scenario_matches_golden():
    cfg = load_config(ROOT / "scenarios" / "reference.json")
    golden = json.loads((ROOT / "tests" / "golden" / "reference_report.json").read_text())
    _, m = run_scenario(cfg)
    got = m.as_dict()
    assert got.keys() == golden.keys()
    for key, want in golden.items():
        assert got[key] == (pytest.approx(want, rel=1e-12, abs=0) if isinstance(want, float) else want), key


def test_replay_equals_live(tmp_path):
    trace, live = run_scenario(small(seed=9))
    p = tmp_path / "run.jsonl"
    trace.write(p)
    assert replay_trace(p) == live


def test_truncated_trace_is_rejected(tmp_path):
    trace, _ = run_scenario(small(budget=100))
    lines = trace.to_jsonl().splitlines()
    p = tmp_path / "cut.jsonl"
    p.write_text("\n".join(lines[:-3]) + "\n")
    with pytest.raises(MalformedTrace):
        replay_trace(p)


def test_hand_built_trace():
    events = [
        {"ev": "insert", "tick": 1, "slice_id": 0, "tokens": 4},
        {"ev": "insert", "tick": 2, "slice_id": 1, "tokens": 6},
        {"ev": "access", "tick": 3, "slice_id": 0},
    ]
    assert compute_metrics(events) == MetricsReport(
        eta=0.4, mean_latency=None, gamma=None, pulse_count=0, conflict_count=0, overhead_fraction=0.0,
        tokens_processed=10, gain_tokens=4, interrupts=0, windows=0)


@pytest.mark.parametrize("seed", [1, 2, 3, 4])
def test_runs_satisfy_structural_invariants(seed):
    cfg = small(seed=seed, threads=3, synthrk=GeneratorParams(tool_prob=0.08),
                scheduler=dataclasses.replace(ScenarioConfig().scheduler, priorities=[0, 2, 1]))
    trace, m = run_scenario(cfg)
    assert audit_trace(trace.events) == []
    assert 0.0 <= m.eta <= 1.0 and 0.0 <= m.gamma <= 1.0
    assert trace.of("store") and trace.of("csp")


def test_audit_flags_priority_inversion_and_missing_reload():
    events = [
        {"ev": "irq", "tick": 0, "id": 4, "action": "raise"},
        {"ev": "irq", "tick": 0, "id": 2, "action": "raise"},
        {"ev": "irq", "tick": 0, "id": 2, "action": "dispatch"},
        {"ev": "store", "tick": 1, "thread": 0, "slice_id": 3},
        {"ev": "token", "tick": 2, "thread": 0, "tool": False},
    ]
    problems = audit_trace(events)
    assert len(problems) == 2


def test_sync_cost_series():
    cfg = small(budget=300, sync=ScenarioSync(pair_cost=0.0))
    s = experiment_sync_cost([2, 4], cfg)
    assert s.column("pairwise_ops") == [1, 6]
    assert s.collapse_point == "none"
    costly = experiment_sync_cost([2, 4, 8], small(budget=300, sync=ScenarioSync(pair_cost=1e6)))
    assert costly.collapse_point == 2
    with pytest.raises(ValueError):
        experiment_sync_cost([4, 2], cfg)


def test_thrash_series_basics():
    a = experiment_thrash([1, 2], small(budget=800))
    assert a.rows[0] == (1, 0.0) and a.rows[1][1] >= a.rows[0][1]
    assert experiment_thrash([1, 2], small(budget=800)).rows == a.rows


def test_homogeneous_config_shape():
    cfg = homogeneous_config(ScenarioConfig(), 6)
    assert cfg.threads == 6 and cfg.synthrk.tool_prob == 0.0 and cfg.memory.recency_weight == 1.0


def test_loglog_slope_of_power_law():
    assert loglog_slope([1, 2, 4, 8], [3, 12, 48, 192]) == pytest.approx(2.0, abs=1e-12)
