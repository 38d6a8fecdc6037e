"""Command-line entry point: ``hrsf run``, ``hrsf sweep`` and ``hrsf validate``.

Exit codes: 0 success, 1 internal error, 2 invalid configuration, 3 timeout.
``HRSF_LOG`` sets the log level (``DEBUG``, ``INFO``, ``WARNING``...).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Sequence

from hrsf.config import ConfigValidationError, ScenarioConfig, load
from hrsf.errors import ConfigurationError, SimulationTimeout
from hrsf.safety import REFERENCE_SH_MM, MethodName, builtin_profiles, compute_budget, compute_Sh
from hrsf.simulation.engine import ALL_METHODS, parse_method, run_scenario
from hrsf.simulation.robot import no_interference_time_s
from hrsf.simulation.trace import TraceSummary, merge_summaries, write_trace_csv

EXIT_OK, EXIT_INTERNAL, EXIT_INVALID, EXIT_TIMEOUT = 0, 1, 2, 3

log = logging.getLogger("hrsf")


def _setup_logging() -> None:
    level = os.environ.get("HRSF_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _load(path: str, seed: int | None, mode: str | None) -> ScenarioConfig:
    try:
        cfg = load(path)
    except OSError as e:
        raise ConfigValidationError([], path) from e
    if seed is not None or mode is not None:
        cfg = cfg.with_overrides(seed=seed, mode=mode)
    return cfg


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8", newline="\n")


def cmd_run(config: str, out: str, seed: int | None = None, mode: str | None = None,
            method: str | None = None) -> int:
    """Simulate one cycle; writes ``trace.csv`` and ``summary.json`` into ``out``."""
    cfg = _load(config, seed, mode)
    if method is not None:
        cfg = cfg.with_overrides(method=parse_method(method).value)
    sc = cfg.build()
    log.info("running %s with seed %d", sc.method, sc.seed)
    result = run_scenario(sc)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "trace.csv", "w", encoding="utf-8", newline="") as fh:
        write_trace_csv(result.records, fh)
    summary = result.summary.to_dict()
    summary.update({
        "scenario": cfg.document["name"],
        "seed": sc.seed,
        "mode": sc.mode.value,
        "departure_s": round(result.depart_s, 3),
        "return_s": round(result.return_s, 3),
        "no_interference_s": round(no_interference_time_s(sc.table, sc.trajectory), 4),
    })
    if sc.method in MethodName._value2member_map_:
        summary["budget"] = compute_budget(sc.profile(sc.method), sc.constants, sc.policy, math.inf,
                                           sc.mode).report()
    _dump_json(out_dir / "summary.json", summary)
    print(f"{sc.method}: t_cycle = {result.summary.mean_s:.3f} s -> {out_dir}")
    return EXIT_OK


def _one_run(args) -> tuple[str, int, TraceSummary]:
    cfg_doc, source, method, seed = args
    from hrsf.config import load_document
    sc = load_document(cfg_doc, source).build()
    return method, seed, run_scenario(sc, method, seed, record=False).summary


def sweep(cfg: ScenarioConfig, methods: Sequence[str], repeats: int, base_seed: int = 0,
          jobs: int = 1) -> list[TraceSummary]:
    """Mean and spread of the cycle time per method over ``repeats`` seeds; rows follow ``methods``."""
    if repeats < 1:
        raise ConfigurationError("repeats must be >= 1")
    methods = [parse_method(m).value for m in methods]
    tasks = [(cfg.document, cfg.source, m, base_seed + k) for m in methods for k in range(repeats)]
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_one_run, tasks))
    else:
        sc = cfg.build()
        results = [(m, s, run_scenario(sc, m, s, record=False).summary) for _, _, m, s in tasks]
    by_method: dict[str, list[tuple[int, TraceSummary]]] = {m: [] for m in methods}
    for m, s, summ in results:
        by_method[m].append((s, summ))
    return [merge_summaries(m, [x for _, x in sorted(by_method[m], key=lambda p: p[0])]) for m in methods]


def comparison_rows(summaries: Sequence[TraceSummary]) -> list[dict]:
    ranks = {s.method: i + 1 for i, s in enumerate(sorted(summaries, key=lambda s: (s.mean_s, s.method)))}
    return [{"method": s.method, "t_cycle_mean_s": round(s.mean_s, 3), "t_cycle_std_s": round(s.std_s, 3),
             "runs": len(s.cycle_times_s), "rank": ranks[s.method]} for s in summaries]


def cmd_sweep(config: str, profiles: Sequence[str] | None = None, repeats: int = 10, out: str | None = None,
              seed: int | None = None, mode: str | None = None, jobs: int = 1) -> int:
    """Cycle-time comparison table over methods and seeds."""
    cfg = _load(config, None, mode)
    methods = list(profiles) if profiles else list(ALL_METHODS)
    base = cfg.document["simulation"]["seed"] if seed is None else seed
    summaries = sweep(cfg, methods, repeats, base, jobs)
    rows = comparison_rows(summaries)
    print(f"{'method':<22} {'t_cycle [s]':>16} {'runs':>5} {'rank':>5}")
    for r in rows:
        print(f"{r['method']:<22} {r['t_cycle_mean_s']:>8.2f} ± {r['t_cycle_std_s']:<5.2f} {r['runs']:>5} {r['rank']:>5}")
    if out is not None:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _dump_json(out_dir / "sweep.json", {"scenario": cfg.document["name"], "repeats": repeats, "base_seed": base,
                                            "mode": cfg.document["simulation"]["mode"], "rows": rows,
                                            "summaries": [s.to_dict() for s in summaries]})
        with open(out_dir / "sweep.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write("method,t_cycle_mean_s,t_cycle_std_s,runs,rank\n")
            for r in rows:
                fh.write(f"{r['method']},{r['t_cycle_mean_s']:.3f},{r['t_cycle_std_s']:.3f},{r['runs']},{r['rank']}\n")
    return EXIT_OK


def cmd_validate(config: str) -> int:
    """Schema and invariant checks, plus the S_h values recomputed from every profile latency."""
    cfg = _load(config, None, None)
    sc = cfg.build()
    problems = []
    for p in builtin_profiles():
        got = round(compute_Sh(p.t_lat_max_ms, sc.policy, math.inf))
        if got != REFERENCE_SH_MM[p.name]:
            problems.append(f"built-in {p.name.value}: S_h {got} mm, expected {REFERENCE_SH_MM[p.name]} mm")
    for name, prof in sc.profiles.items():
        b = compute_budget(prof, sc.constants, sc.policy, math.inf, sc.mode)
        lat = sc.latency.get(name)
        wc = f"{lat.worst_case_ms():.0f} ms" if lat is not None else "default"
        print(f"{name.value:<22} t_LatMax {prof.t_lat_max_ms:6.0f} ms  S_h {round(b.s_h_mm):5d} mm  "
              f"threshold {b.scalar_threshold_mm:8.1f} mm  pipeline {wc}")
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        return EXIT_INVALID
    print(f"{cfg.source}: ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hrsf", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out_required):
        p.add_argument("--config", required=True, help="scenario JSON file")
        p.add_argument("--out", required=out_required, help="output directory")
        p.add_argument("--seed", type=int, help="override the scenario seed (u64)")
        p.add_argument("--mode", choices=["per-axis", "scalar"], help="budget mode override")

    r = sub.add_parser("run", help="simulate one work cycle and write trace.csv and summary.json")
    common(r, True)
    r.add_argument("--method", choices=list(ALL_METHODS), help="method override")
    s = sub.add_parser("sweep", help="compare cycle times over methods and seeds")
    common(s, False)
    s.add_argument("--profiles", help="comma-separated methods (default: all four plus both baselines)")
    s.add_argument("--repeats", type=int, default=10, help="seeds per method")
    s.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    v = sub.add_parser("validate", help="check a scenario and recompute the S_h table")
    v.add_argument("--config", required=True, help="scenario JSON file")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args.config, args.out, args.seed, args.mode, args.method)
        if args.command == "sweep":
            if args.repeats < 1:
                print("--repeats must be >= 1", file=sys.stderr)
                return EXIT_INVALID
            profiles = [p.strip() for p in args.profiles.split(",") if p.strip()] if args.profiles else None
            return cmd_sweep(args.config, profiles, args.repeats, args.out, args.seed, args.mode, args.jobs)
        return cmd_validate(args.config)
    except ConfigValidationError as e:
        if e.__cause__ is not None and not e.issues:
            print(f"{e.source}: cannot read config: {e.__cause__}", file=sys.stderr)
        else:
            print(str(e), file=sys.stderr)
        return EXIT_INVALID
    except (ConfigurationError, ValueError) as e:
        print(f"invalid configuration: {e}", file=sys.stderr)
        return EXIT_INVALID
    except SimulationTimeout as e:
        print(f"timeout: {e}", file=sys.stderr)
        return EXIT_TIMEOUT
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
