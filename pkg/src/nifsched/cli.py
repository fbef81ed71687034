"""Command-line front end: ``nifsched {scenario,graph-stats,schedule,simulate}``.

Every command is a pure function of the config file and seed.  Realizations
use seeds ``seed .. seed + realizations - 1`` and may run in a process pool;
results are gathered and written in seed order, so ``--workers`` never
changes the output bytes.

Exit codes: 0 success, 2 configuration or input error, 3 infeasible in
strict mode, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .baselines import schedule_greedy_per_slot, schedule_uncoordinated
from .config import ConfigError, RunConfig, format_config, load_config
from .graph import build_graph, count_induced_cycles, lower_bound_n0
from .power import InfeasibleError
from .scenario import build_scenario, demand_rng, rate_requirements_for_seed
from .scheduler import (ZeroBoundUnavailable, random_demands, random_zero_bound_demands,
                        schedule_nif, validate_schedule)
from .simulate import CSV_COLUMNS, feasibility_table, metrics_csv, run_consecutive, summarize_metrics

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_IO = 0, 2, 3, 4

SCHEDULE_COLUMNS = ("seed", "mode", "demand_total", "scheme_n0", "bound_n0",
                    "scheme_pct", "bound_pct", "violations")

_SLOT_SCHEDULERS = {
    "nif": schedule_nif,
    "greedy": schedule_greedy_per_slot,
    "uncoordinated": schedule_uncoordinated,
}


class OutputError(OSError):
    pass


# ------------------------------------------------------------------ helpers

def _fmt(v):
    return f"{v:.10g}" if isinstance(v, float) else v


def _csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: _fmt(row[k]) for k in columns})
    return buf.getvalue()


def _write(out: Path, name: str, text: str) -> Path:
    path = out / name
    try:
        out.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OutputError(f"{path}: {exc.strerror or exc}") from exc
    return path


def _seeds(cfg: RunConfig):
    return list(range(cfg.seed, cfg.seed + cfg.realizations))


def _map(fn, items, workers: int):
    """Ordered map, in a process pool when ``workers > 1``."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def read_demand_file(path, config, strict: bool = False) -> np.ndarray:
    """Demands from a text file: one line per cell, ``U`` integers each.

    Blank lines and ``#`` comments are skipped; commas or whitespace
    separate values.  With ``strict`` every cell must total ``N_RF * N``.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OutputError(f"{path}: {exc.strerror or exc}") from exc
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].replace(",", " ").split()
        if not body:
            continue
        try:
            values = [int(x) for x in body]
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: demands must be integers") from None
        if len(values) != config.U:
            raise ConfigError(f"{path}:{lineno}: expected {config.U} demands, got {len(values)}")
        if any(v < 0 or v > config.N for v in values):
            raise ConfigError(f"{path}:{lineno}: demands must lie in [0, {config.N}]")
        if strict and sum(values) != config.N_RF * config.N:
            raise ConfigError(f"{path}:{lineno}: cell total {sum(values)} != "
                              f"N_RF * N = {config.N_RF * config.N}")
        rows.append(values)
    if len(rows) != config.K:
        raise ConfigError(f"{path}: expected {config.K} cells, got {len(rows)}")
    return np.array(rows, dtype=int).ravel()


# ----------------------------------------------------------------- commands

def cmd_scenario(cfg: RunConfig, out: Path, workers: int = 1, figures: bool = False) -> int:
    """One JSON file per realization: geometry, gains and rate requirements."""
    radio = cfg.radio
    for seed in _seeds(cfg):
        if radio.n_users == 0:
            doc = {"rng_seed": seed, "users": 0}
        else:
            doc = build_scenario(radio, seed).to_dict()
            doc["gamma_bps"] = rate_requirements_for_seed(radio, seed).gamma.tolist()
        _write(out, f"scenario_{seed}.json", json.dumps(doc))
    return EXIT_OK


def _graph_stats_one(job):
    cfg, seed = job
    scenario = build_scenario(cfg.radio, seed)
    rows = []
    for eps in cfg.epsilon_list:
        g = build_graph(scenario, eps)
        rows.append((g.edge_count, count_induced_cycles(g, cfg.max_cycle_len),
                     max(len(c) for c in g.maximal_cliques)))
    return rows


def graph_stats_rows(cfg: RunConfig, workers: int = 1) -> list:
    """Mean edge, induced-cycle and largest-clique counts per epsilon."""
    lengths = range(3, cfg.max_cycle_len + 1)
    if cfg.radio.n_users == 0:
        per_seed = []
    else:
        per_seed = _map(_graph_stats_one, [(cfg, s) for s in _seeds(cfg)], workers)
    rows = []
    for i, eps in enumerate(cfg.epsilon_list):
        samples = [res[i] for res in per_seed]
        row = {"epsilon": float(eps), "realizations": len(samples),
               "mean_edges": float(np.mean([s[0] for s in samples])) if samples else 0.0}
        for L in lengths:
            row[f"mean_cycles_{L}"] = float(np.mean([s[1][L] for s in samples])) if samples else 0.0
        row["mean_max_clique"] = float(np.mean([s[2] for s in samples])) if samples else 0.0
        rows.append(row)
    return rows


def cmd_graph_stats(cfg: RunConfig, out: Path, workers: int = 1, figures: bool = False) -> int:
    rows = graph_stats_rows(cfg, workers)
    columns = (["epsilon", "realizations", "mean_edges"]
               + [f"mean_cycles_{L}" for L in range(3, cfg.max_cycle_len + 1)]
               + ["mean_max_clique"])
    _write(out, "graph_stats.csv", _csv(rows, columns))
    if figures and rows:
        from .plotting import plot_induced_cycles
        plot_induced_cycles(rows, out / "induced_cycles.png")
    return EXIT_OK


def _schedule_one(job):
    cfg, seed, d_file = job
    radio = cfg.radio
    scenario = build_scenario(radio, seed)
    graph = build_graph(scenario, radio.epsilon)
    if d_file is not None:
        d = d_file
    elif cfg.d_source == "random-zero-bound":
        d = random_zero_bound_demands(graph, radio, demand_rng(seed))
    else:
        d = random_demands(radio, demand_rng(seed))
    S = _SLOT_SCHEDULERS[cfg.mode](graph, d, radio)
    stats = validate_schedule(S, graph, d, radio)
    bound = lower_bound_n0(graph, d, radio.N)
    total = int(np.sum(d))
    row = {
        "seed": seed, "mode": cfg.mode, "demand_total": total,
        "scheme_n0": stats.n0, "bound_n0": bound,
        "scheme_pct": 100.0 * stats.n0 / total if total else 0.0,
        "bound_pct": 100.0 * bound / total if total else 0.0,
        "violations": len(stats.violations),
    }
    return row, {"seed": seed, "d": [int(x) for x in d], "schedule": S.tolist()}


def cmd_schedule(cfg: RunConfig, out: Path, workers: int = 1, figures: bool = False) -> int:
    """Schedule given demands, compare against the clique lower bound."""
    if cfg.mode not in _SLOT_SCHEDULERS:
        raise ConfigError("mode is_based schedules from rate requirements; use 'simulate'")
    d_file = None
    if cfg.d_source == "file":
        if not cfg.d_file:
            raise ConfigError("d_source = file needs d_file")
        d_file = read_demand_file(cfg.d_file, cfg.radio, cfg.strict)
    results = [] if cfg.radio.n_users == 0 else _map(
        _schedule_one, [(cfg, s, d_file) for s in _seeds(cfg)], workers)
    rows = [r for r, _ in results]
    _write(out, "schedule_unfulfilled.csv", _csv(rows, SCHEDULE_COLUMNS))
    _write(out, "schedules.json", json.dumps([doc for _, doc in results]))
    if figures and rows:
        from .plotting import plot_unfulfilled
        plot_unfulfilled(rows, out / "unfulfilled.png")
    return EXIT_OK


def _simulate_one(job):
    cfg, seed = job
    radio = cfg.radio
    scenario = build_scenario(radio, seed)
    gamma = rate_requirements_for_seed(radio, seed).gamma
    try:
        trace = run_consecutive(scenario, gamma, mode=cfg.mode, zf=cfg.zf,
                                strict=cfg.strict, seed=seed)
    except InfeasibleError as exc:
        return seed, None, str(exc)
    return seed, trace, None


def _feasibility_one(job):
    cfg, seed = job
    scenario = build_scenario(cfg.radio, seed)
    return feasibility_table([(scenario, rate_requirements_for_seed(cfg.radio, seed).gamma)],
                             cfg.pmax_list)


def cmd_simulate(cfg: RunConfig, out: Path, workers: int = 1, figures: bool = False,
                 save_traces: bool = False) -> int:
    """Multi-period runs; per-period metrics CSV plus an aggregate summary."""
    if cfg.radio.n_users == 0:
        _write(out, "metrics.csv", ",".join(CSV_COLUMNS) + "\n")
        return EXIT_OK
    jobs = [(cfg, s) for s in _seeds(cfg)]
    results = _map(_simulate_one, jobs, workers)
    traces = [t for _, t, _ in results if t is not None]
    failed = [{"seed": s, "error": e} for s, t, e in results if t is None]
    _write(out, "metrics.csv", metrics_csv(traces))
    summary = {"mode": cfg.mode, "zf": cfg.zf, "strict_failures": failed}
    if traces:
        summary.update(summarize_metrics(traces))
        cdf_rows = [{"ratio": x, "cdf": y} for x, y in zip(summary["cdf_x"], summary["cdf_y"])]
        _write(out, "rate_cdf.csv", _csv(cdf_rows, ("ratio", "cdf")))
    _write(out, "summary.json", json.dumps(summary, indent=1))
    if save_traces:
        _write(out, "traces.jsonl", "".join(t.to_json() + "\n" for t in traces))
    feas = None
    if cfg.pmax_list:
        per_seed = _map(_feasibility_one, jobs, workers)
        feas = [(p, float(np.mean([r[i][1] for r in per_seed])),
                 float(np.mean([r[i][2] for r in per_seed])))
                for i, p in enumerate(cfg.pmax_list)]
        rows = [{"pmax_dbm": p, "proposed": a, "is_based": b} for p, a, b in feas]
        _write(out, "feasibility.csv", _csv(rows, ("pmax_dbm", "proposed", "is_based")))
    if figures:
        from .plotting import plot_feasibility, plot_power_traces, plot_rate_cdf
        if traces:
            plot_power_traces(traces, out / "power_traces.png")
            plot_rate_cdf(summary, out / "rate_cdf.png")
        if feas:
            plot_feasibility(feas, out / "feasibility.png")
    return EXIT_INFEASIBLE if failed else EXIT_OK


COMMANDS = {
    "scenario": cmd_scenario,
    "graph-stats": cmd_graph_stats,
    "schedule": cmd_schedule,
    "simulate": cmd_simulate,
}


# --------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value config file")
    common.add_argument("--seed", type=int, help="first realization seed")
    common.add_argument("--realizations", type=int, help="number of realizations")
    common.add_argument("--mode", choices=("nif", "greedy", "uncoordinated", "is_based"))
    common.add_argument("--zf", action="store_true", default=None,
                        help="idealized intra-cell zero forcing (simulate)")
    common.add_argument("--strict", action="store_true", default=None,
                        help="fail instead of falling back to best effort")
    common.add_argument("--workers", type=int, default=1, help="worker processes")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--figures", action="store_true",
                        help="also write PNG figures next to the CSV files")
    p = argparse.ArgumentParser(prog="nifsched", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("scenario", parents=[common], help="write network realizations as JSON")
    sub.add_parser("graph-stats", parents=[common], help="interference-graph statistics per epsilon")
    s = sub.add_parser("schedule", parents=[common], help="single-shot scheduling vs lower bound")
    s.add_argument("--d-source", choices=("random", "random-zero-bound", "file"))
    s.add_argument("--d-file", help="demand file (with --d-source file)")
    s = sub.add_parser("simulate", parents=[common], help="multi-period simulation")
    s.add_argument("--save-traces", action="store_true", help="write full traces as JSON lines")
    sub.add_parser("show-config", parents=[common], help="print the effective configuration")
    return p


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {k: getattr(args, k, None) for k in ("seed", "realizations", "mode", "zf", "strict")}
    overrides["d_source"] = getattr(args, "d_source", None)
    overrides["d_file"] = getattr(args, "d_file", None)
    overrides["out"] = str(args.out) if args.out is not None else None
    return cfg.replace(**{k: v for k, v in overrides.items() if v is not None})


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        if args.command == "show-config":
            sys.stdout.write(format_config(cfg))
            return EXIT_OK
        out = Path(cfg.out)
        kwargs = {"workers": args.workers, "figures": args.figures}
        if args.command == "simulate":
            kwargs["save_traces"] = args.save_traces
        return COMMANDS[args.command](cfg, out, **kwargs)
    except (ConfigError, ZeroBoundUnavailable) as exc:
        print(f"nifsched: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"nifsched: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"nifsched: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
