"""Command-line runner: gen-bench, search, sweep, report.

Exit codes: 0 success, 2 config error, 3 data error, 4 budget or invariant
violation. Relative output paths are resolved against ``$DSMNAS_OUTPUT_ROOT``
when it is set.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields

import numpy as np

from .baselines import random_in_subspace, random_search, random_with_subspace_update, reinforce_whole_space
from .bench_oracle import (
    BenchmarkFormatError,
    BenchmarkInvariantError,
    BudgetExhausted,
    MissingEntryError,
    SyntheticBenchSpec,
    generate_synthetic,
    load_benchmark,
    locality_report,
    save_benchmark,
)
from .search_space import EncodingError, SearchSpaceSpec, parse_arch, random_architecture
from .trainer import ConfigError, SearchConfig, run_search, seed_streams, write_run

OUTPUT_ROOT_ENV = "DSMNAS_OUTPUT_ROOT"
ALGORITHMS = ("dsm", "dsm-plus", "random", "reinforce", "random-sub", "random-update")
EXIT_CONFIG, EXIT_DATA, EXIT_INVARIANT = 2, 3, 4

# short axis / config-file names for SearchConfig fields
ALIASES = {
    "k": "num_subspaces",
    "m": "radius",
    "reward": "reward_mode",
    "graph": "graph_mode",
    "update": "subspace_update",
    "entropy": "entropy_weight",
}
# config keys that distinguish ablation arms in reports
LABEL_KEYS = ("subspace_update", "reward_mode", "graph_mode", "num_subspaces", "radius")


def output_path(path: str) -> str:
    return os.path.join(os.environ.get(OUTPUT_ROOT_ENV, ""), path)


# -- config handling ------------------------------------------------------

def _coerce(name: str, text: str):
    """Parse a SearchConfig field value from text."""
    types = {f.name: f.type for f in fields(SearchConfig)}
    if name not in types:
        raise ConfigError(f"unknown search option {name!r}")
    t = str(types[name])
    text = text.strip()
    try:
        if t.startswith("bool"):
            low = text.lower()
            if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(text)
            return low in ("1", "true", "yes", "on")
        if t.startswith("int"):
            return int(text)
        if t.startswith("float"):
            return float(text)
    except ValueError as err:
        raise ConfigError(f"bad value for {name}: {text!r}") from err
    if name == "warm_start_centers":
        raise ConfigError("warm-start centers come from --warm-start")
    return text


def read_config(path: str | None, section: str) -> dict:
    if path is None:
        return {}
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    if not parser.has_section(section):
        raise ConfigError(f"config {path} has no [{section}] section")
    return dict(parser.items(section))


def synthetic_spec_from(options: dict) -> SyntheticBenchSpec:
    known = {"positions", "codes", "utility_scale", "interaction", "noise", "test_gap", "seed", "name"}
    unknown = set(options) - known
    if unknown:
        raise ConfigError(f"unknown synthetic options: {sorted(unknown)}")
    try:
        space = SearchSpaceSpec.uniform(int(options.get("positions", 6)), int(options.get("codes", 5)))
        return SyntheticBenchSpec(
            space,
            utility_scale=float(options.get("utility_scale", 0.4)),
            interaction=float(options.get("interaction", 0.5)),
            noise=float(options.get("noise", 0.02)),
            test_gap=float(options.get("test_gap", 0.05)),
            seed=int(options.get("seed", 0)),
        )
    except (ValueError, EncodingError) as err:
        raise ConfigError(str(err)) from err


def read_architectures(path: str, spec: SearchSpaceSpec) -> list:
    """One comma-separated architecture per line; ``#`` starts a comment."""
    archs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                archs.append(parse_arch(line, spec))
    if not archs:
        raise EncodingError(f"{path} lists no architectures")
    return archs


# -- running --------------------------------------------------------------

def run_algorithm(benchmark, algo: str, config: SearchConfig, center=None):
    """Dispatch one run; every algorithm spends ``config.budget`` queries at most."""
    if algo not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {algo!r}")
    config.validate(benchmark.spec.num_positions, subspaces=algo not in ("random", "reinforce"))
    if algo == "dsm-plus" and not config.warm_start_centers:
        raise ConfigError("dsm-plus needs warm-start centers")
    if algo in ("dsm", "dsm-plus"):
        return run_search(benchmark, config, algorithm=algo)
    if algo == "random":
        return random_search(benchmark, config.budget, config.seed, config.memoize, config.max_iterations)
    if algo == "reinforce":
        return reinforce_whole_space(benchmark, config.budget, config)
    if algo == "random-update":
        return random_with_subspace_update(benchmark, config.budget, config.num_subspaces, config.radius,
                                           config.seed, config.memoize, config.max_iterations)
    if center is None:
        center = random_architecture(benchmark.spec, seed_streams(config.seed)[0])
    return random_in_subspace(benchmark, config.budget, center, config.radius, config.seed,
                              config.memoize, config.max_iterations)


def _search_options(args) -> dict:
    opts = {}
    for key, value in read_config(args.config, "search").items():
        name = ALIASES.get(key, key)
        opts[name] = _coerce(name, value)
    flags = {"seed": getattr(args, "seed", None), "budget": args.budget, "num_subspaces": args.k, "radius": args.m,
             "lr": args.lr, "entropy_weight": args.entropy_weight}
    opts.update({k: v for k, v in flags.items() if v is not None})
    if args.no_subspace_update:
        opts["subspace_update"] = False
    if args.reward is not None:
        opts["reward_mode"] = args.reward
    if args.no_gnn:
        opts["graph_mode"] = "pointwise"
    if args.no_memo:
        opts["memoize"] = False
    return opts


def _make_config(opts: dict, warm_start=None) -> SearchConfig:
    try:
        return SearchConfig(**opts, warm_start_centers=warm_start)
    except TypeError as err:
        raise ConfigError(str(err)) from err


def cmd_gen_bench(args) -> int:
    options = read_config(args.config, "synthetic")
    for key in ("positions", "codes", "utility_scale", "interaction", "noise", "test_gap", "seed"):
        value = getattr(args, key)
        if value is not None:
            options[key] = str(value)
    name = options.pop("name", None)
    bench = generate_synthetic(synthetic_spec_from(options), name=name)
    out = output_path(args.out)
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    save_benchmark(bench, out)
    print(f"wrote {len(bench)} architectures to {out}")
    return 0


def cmd_search(args) -> int:
    bench = load_benchmark(args.bench)
    warm = read_architectures(args.warm_start, bench.spec) if args.warm_start else None
    config = _make_config(_search_options(args), warm)
    center = parse_arch(args.center, bench.spec) if args.center else None
    out = output_path(args.out or f"runs/{args.algo}_seed{config.seed}")
    if args.algo in ("dsm", "dsm-plus") and args.graph_log:
        config.validate(bench.spec.num_positions)
        log = []
        result = run_search(bench, config, algorithm=args.algo, graph_log=log)
    else:
        log = None
        result = run_algorithm(bench, args.algo, config, center)
    write_run(result, out, graph_log=log)
    print(f"{args.algo} seed={result.seed} val={result.val:.6f} test={result.test:.6f} "
          f"queries={result.queries_used} -> {out}")
    return 0


def parse_seeds(text: str) -> list:
    """``0-29`` or ``1,4,7`` (or a mix)."""
    seeds = []
    try:
        for part in text.split(","):
            part = part.strip()
            if "-" in part:
                lo, hi = part.split("-", 1)
                seeds.extend(range(int(lo), int(hi) + 1))
            elif part:
                seeds.append(int(part))
    except ValueError as err:
        raise ConfigError(f"bad seed list {text!r}") from err
    if not seeds:
        raise ConfigError("empty seed list")
    return seeds


def parse_axis(text: str) -> tuple:
    if "=" not in text:
        raise ConfigError(f"axis must look like name=v1,v2: {text!r}")
    key, values = text.split("=", 1)
    key = key.strip()
    values = [v.strip() for v in values.split(",") if v.strip()]
    if not values:
        raise ConfigError(f"axis {key!r} has no values")
    name = key if key == "algo" else ALIASES.get(key, key)
    if name != "algo":
        for v in values:
            _coerce(name, v)
    elif any(v not in ALGORITHMS for v in values):
        raise ConfigError(f"unknown algorithm in axis {text!r}")
    return key, name, values


_WORKER_BENCH = {}


def _sweep_cell(task):
    bench_path, algo, opts, warm, outdir = task
    bench = _WORKER_BENCH.get(bench_path)
    if bench is None:
        bench = _WORKER_BENCH[bench_path] = load_benchmark(bench_path)
    config = _make_config(opts, warm)
    result = run_algorithm(bench, algo, config)
    write_run(result, outdir)
    return result.summary()


def mean_std(values) -> tuple:
    """Mean and sample standard deviation (0 for a single value)."""
    arr = np.asarray(values, dtype=float)
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return float(arr.mean()), std


def cmd_sweep(args) -> int:
    bench = load_benchmark(args.bench)
    seeds = parse_seeds(args.seeds)
    axes = [parse_axis(a) for a in args.axis]
    if len({a[0] for a in axes}) != len(axes):
        raise ConfigError("axis given twice")
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    base = _search_options(args)
    warm = read_architectures(args.warm_start, bench.spec) if args.warm_start else None
    root = output_path(args.out)
    cells = list(itertools.product(*[a[2] for a in axes])) if axes else [()]
    tasks, cell_of = [], []
    for cell in cells:
        opts, algo = dict(base), args.algo
        for (key, name, _), value in zip(axes, cell):
            if name == "algo":
                algo = value
            else:
                opts[name] = _coerce(name, value)
        label = "_".join(f"{k}={v}" for (k, _, _), v in zip(axes, cell)) or "base"
        for seed in seeds:
            o = dict(opts, seed=seed)
            _make_config(o, warm).validate(bench.spec.num_positions, subspaces=algo not in ("random", "reinforce"))
            tasks.append((args.bench, algo, o, warm, os.path.join(root, label, f"seed{seed}")))
            cell_of.append(cell)
    if args.jobs == 1:
        _WORKER_BENCH[args.bench] = bench
        summaries = [_sweep_cell(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            summaries = list(pool.map(_sweep_cell, tasks))
    rows = []
    for cell in cells:
        runs = [s for s, c in zip(summaries, cell_of) if c == cell]
        val_mean, val_std = mean_std([r["val"] for r in runs])
        test_mean, test_std = mean_std([r["test"] for r in runs])
        row = {key: value for (key, _, _), value in zip(axes, cell)}
        row.update(runs=len(runs), val_mean=val_mean, val_std=val_std, test_mean=test_mean,
                   test_std=test_std, queries_mean=mean_std([r["queries_used"] for r in runs])[0])
        rows.append(row)
    csv_path = os.path.join(root, "sweep.csv")
    _write_csv(csv_path, rows)
    print(f"{len(tasks)} runs, {len(rows)} cells -> {csv_path}")
    return 0


# -- report ---------------------------------------------------------------

def _write_csv(path: str, rows: list, header: list | None = None) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    header = header or (list(rows[0]) if rows else [])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def find_runs(paths) -> list:
    """Run directories (those holding ``summary.json``) under ``paths``, sorted."""
    found = set()
    for p in paths:
        if not os.path.isdir(p):
            raise FileNotFoundError(f"no such run directory: {p}")
        for dirpath, _, files in os.walk(p):
            if "summary.json" in files:
                found.add(dirpath)
    if not found:
        raise FileNotFoundError("no summary.json under the given directories")
    return sorted(found)


def run_label(summary: dict) -> str:
    defaults = SearchConfig()
    cfg = summary.get("config", {})
    tags = [f"{k}={cfg[k]}" for k in LABEL_KEYS if k in cfg and cfg[k] != getattr(defaults, k)]
    return summary["algorithm"] + (f"[{','.join(tags)}]" if tags else "")


def best_so_far_curve(trajectory: list, horizon: int) -> list:
    """Best metric after q charged queries, q = 1..horizon (None before the first record)."""
    curve = [None] * horizon
    for rec in trajectory:
        q = rec["budget_used"]
        if 1 <= q <= horizon:
            curve[q - 1] = rec["best_val"]
    last = None
    for q in range(horizon):
        if curve[q] is None:
            curve[q] = last
        last = curve[q]
    return curve


def cmd_report(args) -> int:
    out = output_path(args.out)
    runs = []
    for d in find_runs(args.runs):
        with open(os.path.join(d, "summary.json"), encoding="utf-8") as fh:
            summary = json.load(fh)
        with open(os.path.join(d, "trajectory.jsonl"), encoding="utf-8") as fh:
            trajectory = [json.loads(line) for line in fh if line.strip()]
        best = [rec["best_val"] for rec in trajectory]
        if any(b < a for a, b in zip(best, best[1:])):
            raise AssertionError(f"best-so-far metric decreases in {d}")
        runs.append((run_label(summary), summary, trajectory))
    labels = sorted({r[0] for r in runs})

    table = []
    for label in labels:
        group = [s for lab, s, _ in runs if lab == label]
        vm, vs = mean_std([s["val"] for s in group])
        tm, ts = mean_std([s["test"] for s in group])
        dm, ds = mean_std([s["distinct_centers"] for s in group])
        table.append({"label": label, "runs": len(group), "val_mean": vm, "val_std": vs,
                      "test_mean": tm, "test_std": ts, "centers_mean": dm, "centers_std": ds})
    _write_csv(os.path.join(out, "table.csv"), table)
    _write_csv(os.path.join(out, "distinct_centers.csv"),
               [{"label": r["label"], "runs": r["runs"], "mean": r["centers_mean"], "std": r["centers_std"]}
                for r in table])

    horizon = max(s["queries_used"] for _, s, _ in runs)
    curves = []
    for label in labels:
        per_run = [best_so_far_curve(t, horizon) for lab, _, t in runs if lab == label]
        for q in range(horizon):
            vals = [c[q] for c in per_run if c[q] is not None]
            if vals:
                curves.append({"label": label, "queries": q + 1, "best_mean": float(np.mean(vals)),
                               "runs": len(vals)})
    _write_csv(os.path.join(out, "curves.csv"), curves, ["label", "queries", "best_mean", "runs"])

    if args.bench:
        bench = load_benchmark(args.bench)
        rows = locality_report(bench, args.pairs, np.random.default_rng(args.seed))
        _write_csv(os.path.join(out, "locality.csv"),
                   [{"distance": r.distance, "mean": r.mean, "std": r.std, "count": r.count} for r in rows],
                   ["distance", "mean", "std", "count"])

    width = max(len(r["label"]) for r in table)
    print(f"{'label':<{width}}  runs  val (mean +- std)        test (mean +- std)")
    for r in table:
        print(f"{r['label']:<{width}}  {r['runs']:>4}  {r['val_mean']:.4f} +- {r['val_std']:.4f}"
              f"      {r['test_mean']:.4f} +- {r['test_std']:.4f}")
    print(f"report -> {out}")
    return 0


# -- entry point ----------------------------------------------------------

def _add_search_flags(p, with_seed=True):
    p.add_argument("--bench", required=True, help="benchmark table file")
    p.add_argument("--algo", choices=ALGORITHMS, default="dsm")
    p.add_argument("--config", help="INI file with a [search] section")
    if with_seed:
        p.add_argument("--seed", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--k", type=int, help="number of candidate subspaces")
    p.add_argument("--m", type=int, help="local search distance")
    p.add_argument("--lr", type=float)
    p.add_argument("--entropy-weight", type=float)
    p.add_argument("--no-subspace-update", action="store_true")
    p.add_argument("--reward", choices=("improvement", "absolute"))
    p.add_argument("--no-gnn", action="store_true", help="score subspaces without message passing")
    p.add_argument("--no-memo", action="store_true", help="charge repeated queries")
    p.add_argument("--warm-start", help="file of initial centers, one per line")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsmnas", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-bench", help="write a synthetic benchmark table")
    g.add_argument("--config", help="INI file with a [synthetic] section")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--positions", type=int)
    g.add_argument("--codes", type=int)
    g.add_argument("--utility-scale", dest="utility_scale", type=float)
    g.add_argument("--interaction", type=float)
    g.add_argument("--noise", type=float)
    g.add_argument("--test-gap", dest="test_gap", type=float)
    g.set_defaults(func=cmd_gen_bench)

    s = sub.add_parser("search", help="one search run")
    _add_search_flags(s)
    s.add_argument("--center", help="fixed center for random-sub")
    s.add_argument("--graph-log", action="store_true", help="also write graph.jsonl")
    s.add_argument("--out")
    s.set_defaults(func=cmd_search)

    w = sub.add_parser("sweep", help="seeds x config axes, aggregated to CSV")
    _add_search_flags(w, with_seed=False)
    w.add_argument("--seeds", default="0-4")
    w.add_argument("--axis", action="append", default=[], help="name=v1,v2 (repeatable)")
    w.add_argument("--jobs", type=int, default=1)
    w.add_argument("--out", default="sweep")
    w.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="tables and plot data from run directories")
    r.add_argument("runs", nargs="+")
    r.add_argument("--out", default="report")
    r.add_argument("--bench", help="also write locality.csv for this benchmark")
    r.add_argument("--pairs", type=int, default=10_000)
    r.add_argument("--seed", type=int, default=0)
    r.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, configparser.Error) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (BenchmarkFormatError, MissingEntryError, EncodingError, OSError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (BudgetExhausted, BenchmarkInvariantError, AssertionError) as err:
        print(f"invariant violation: {err}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
