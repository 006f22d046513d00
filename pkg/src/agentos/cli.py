"""``agentos`` command line: slice, run, gamma, ivt, replay, experiment.

Exit codes: 0 success, 2 configuration error, 3 invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import sys
from pathlib import Path

from . import config as cfgmod
from .experiments import experiment_sync_cost, experiment_thrash
from .kernel import AlignmentFailure, EmptyOutput, NoResume, default_ivt
from .scenario import audit_trace, replay_trace, run_scenario
from .slicer import AttentionTrace, EmptySlice, NonStochasticRow, finalize_slices, load_attention_trace
from .smmu import SliceTooLarge
from .sync import GbmParams, SyncConfig, estimate_gamma
from .synthrk import DimensionMismatch, SyntheticRK, embed_token
from .trace import MalformedTrace, dumps, hex64

EXIT_CONFIG = 2
EXIT_INVARIANT = 3

INVARIANT_ERRORS = (MalformedTrace, NonStochasticRow, EmptySlice, DimensionMismatch, SliceTooLarge,
                    AlignmentFailure, EmptyOutput, NoResume)


class InvariantViolation(RuntimeError):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _common(p: argparse.ArgumentParser, fmt: str) -> None:
    p.add_argument("--config", help="scenario config JSON")
    p.add_argument("--seed", type=_u64, help="override the scenario seed")
    p.add_argument("--out", help="write the main output here instead of stdout")
    p.add_argument("--format", choices=("json", "csv", "jsonl"), default=fmt)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="agentos", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("slice", help="cut an attention trace into semantic slices")
    _common(p, "json")
    p.add_argument("--input", help="attention trace JSON; omitted means a synthetic trace")
    p.add_argument("--length", type=int, default=64, help="synthetic trace length")
    p.add_argument("--epsilon", type=float, help="CID jump threshold (default: config slicer.epsilon)")

    p = sub.add_parser("run", help="run a full scenario")
    _common(p, "json")
    p.add_argument("--trace", help="also write the JSONL event trace here")

    p = sub.add_parser("gamma", help="Monte-Carlo sync stability estimate")
    _common(p, "json")
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=0.2)
    p.add_argument("--delta0", type=float, default=1.0)
    p.add_argument("--lambda", dest="lambda_", type=float, default=0.1)
    p.add_argument("--eps-max", type=float, default=2.0)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--trials", type=int, default=10_000)

    p = sub.add_parser("ivt", help="print the interrupt vector table")
    _common(p, "json")

    p = sub.add_parser("replay", help="recompute the metrics report from a JSONL trace")
    _common(p, "json")
    p.add_argument("trace_file")

    p = sub.add_parser("experiment", help="parameter sweeps")
    esub = p.add_subparsers(dest="experiment", required=True)
    e = esub.add_parser("thrash", help="overhead fraction vs thread count")
    _common(e, "csv")
    e.add_argument("--n", "--threads", dest="n", type=_int_list, default=[1, 2, 4, 8, 16])
    e = esub.add_parser("sync-cost", help="sync cost vs agent count")
    _common(e, "csv")
    e.add_argument("--k", "--agents", dest="k", type=_int_list, default=[2, 4, 8, 16, 32])
    for e in esub.choices.values():
        e.add_argument("--budget", type=int, help="override the scenario tick budget")
        e.add_argument("--trace", help="write each sweep point's JSONL trace to STEM_<x>.jsonl")
    return ap


def _scenario(args) -> cfgmod.ScenarioConfig:
    cfg = cfgmod.load_config(args.config) if args.config else cfgmod.ScenarioConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _table(rows: list[dict], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(rows, indent=2) + "\n"
    if fmt == "jsonl":
        return "".join(dumps(r) + "\n" for r in rows)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]) if rows else [], lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _record(obj: dict, fmt: str) -> str:
    return json.dumps(obj, indent=2) + "\n" if fmt == "json" else _table([obj], fmt)


def cmd_slice(args) -> str:
    cfg = _scenario(args)
    eps = args.epsilon if args.epsilon is not None else cfg.slicer.epsilon
    if args.input:
        trace, tokens, embs = load_attention_trace(args.input)
    else:
        rk = SyntheticRK.seeded(cfg.seed, cfg.synthrk)
        rows = [rk.gen_attention_row(t) for t in range(1, args.length + 1)]
        trace = AttentionTrace.from_rows(rows)
        tokens = [rk.gen_step().token_id for _ in rows]
        embs = [embed_token(t, cfg.synthrk.dim) for t in tokens]
    slices = finalize_slices(trace, tokens, embs, eps)
    return _table([{"slice_id": s.slice_id, "start": s.token_range[0], "end": s.token_range[1],
                    "tokens": s.size, "hash": hex64(s.semantic_hash), "importance": s.importance}
                   for s in slices], args.format)


def cmd_run(args) -> str:
    trace, report = run_scenario(_scenario(args))
    problems = audit_trace(trace.events)
    if args.trace:
        trace.write(args.trace)
    if problems:
        raise InvariantViolation("; ".join(problems[:5]))
    if args.format == "jsonl":
        return trace.to_jsonl()
    return _record(report.as_dict(), args.format)


def cmd_gamma(args) -> str:
    base = _scenario(args).sync if args.config else SyncConfig()
    sync = dataclasses.replace(base, lambda_=args.lambda_, epsilon_max=args.eps_max, dt=args.dt)
    params = GbmParams(delta0=args.delta0, mu=args.mu, sigma=args.sigma, horizon=args.horizon)
    seed = args.seed if args.seed is not None else 0
    est = estimate_gamma(sync, params, args.trials, seed)
    return _record({"gamma": est.gamma, "std_error": est.std_error, "trials": est.trials,
                    "seed": seed}, args.format)


def cmd_ivt(args) -> str:
    return _table([{"irq": f"0x{e.irq:02x}", "name": e.name, "priority": e.priority.name,
                    "description": e.description} for e in default_ivt().values()], args.format)


def cmd_replay(args) -> str:
    return _record(replay_trace(args.trace_file).as_dict(), args.format)


def _write_traces(series, stem: str | None) -> None:
    if stem:
        base = Path(stem)
        for x, trace in series.traces.items():
            trace.write(base.with_name(f"{base.stem}_{x}.jsonl"))


def cmd_experiment(args) -> str:
    cfg = _scenario(args)
    if args.budget is not None:
        cfg = dataclasses.replace(cfg, budget=args.budget)
    if args.experiment == "thrash":
        series = experiment_thrash(args.n, cfg)
        _write_traces(series, args.trace)
        if not series.monotone:
            raise InvariantViolation("overhead fraction decreased with thread count")
        return series.to_csv() if args.format == "csv" else _table(
            [dict(zip(series.columns, r)) for r in series.rows], args.format)
    series = experiment_sync_cost(args.k, cfg)
    _write_traces(series, args.trace)
    if args.format == "csv":
        return series.to_csv() + f"# collapse_point,{series.collapse_point}\n"
    rows = [dict(zip(series.columns, r)) for r in series.rows]
    return _record({"rows": rows, "collapse_point": series.collapse_point}, "json") \
        if args.format == "json" else _table(rows, args.format)


COMMANDS = {"slice": cmd_slice, "run": cmd_run, "gamma": cmd_gamma, "ivt": cmd_ivt,
            "replay": cmd_replay, "experiment": cmd_experiment}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = COMMANDS[args.command](args)
    except cfgmod.ConfigError as exc:
        print(f"agentos: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError) as exc:
        if isinstance(exc, INVARIANT_ERRORS):
            print(f"agentos: invariant violation: {exc}", file=sys.stderr)
            return EXIT_INVARIANT
        print(f"agentos: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvariantViolation, *INVARIANT_ERRORS) as exc:
        print(f"agentos: invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
