"""Command-line entry point.

    rlalloc run --config CONFIG (--data CSV | --data-risky CSV --data-safe CSV | --synthetic TOML)
                [--out DIR] [--seed N] [--jobs N] [--no-qtables]
    rlalloc validate --config CONFIG
    rlalloc inspect-qtable TABLE.csv

CONFIG is a TOML file (one experiment or a suite) or a bundled preset name
such as ``#002``, ``ch4`` or ``constraints``. Output files are prefixed with
the experiment id. ``RLALLOC_OUT`` sets the output directory when ``--out``
is not given.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from rlalloc import __version__
from rlalloc import protocol as P
from rlalloc import report as R
from rlalloc import scenarios
from rlalloc.agent import QTable, load_q_table, save_q_table
from rlalloc.config import PRESET_DIR, ExperimentConfig, load_suite, read_toml
from rlalloc.env import Action, all_state_keys, state_index
from rlalloc.errors import ConfigError, DataError, RlallocError
from rlalloc.market import MarketData, align, generate_synthetic_market, load_asset_csv, load_price_csv

logger = logging.getLogger("rlalloc")

OUT_ENV = "RLALLOC_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4


# ------------------------------------------------------------------ inputs


def resolve_configs(arg: str) -> list[ExperimentConfig]:
    """A config path, or the name of a bundled preset."""
    path = Path(arg)
    if path.is_file():
        return load_suite(path)
    bundled = PRESET_DIR / f"{arg.lstrip('#')}.toml"
    if bundled.is_file():
        return load_suite(bundled)
    raise ConfigError(f"no config file or bundled preset named {arg!r}", "config")


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from None


def load_data(args, seed: int) -> tuple[MarketData, dict]:
    """Market data from exactly one source, plus a provenance record."""
    pair = args.data_risky is not None or args.data_safe is not None
    n_sources = (args.data is not None) + pair + (args.synthetic is not None)
    if n_sources != 1:
        raise ConfigError("give exactly one of --data, --data-risky/--data-safe, --synthetic", "data")
    digest = hashlib.sha256()
    if args.data is not None:
        digest.update(_read_bytes(args.data))
        risky, safe = load_price_csv(args.data)
        info = {"source": "csv", "paths": [args.data]}
    elif pair:
        if args.data_risky is None or args.data_safe is None:
            raise ConfigError("--data-risky and --data-safe go together", "data")
        digest.update(_read_bytes(args.data_risky))
        digest.update(_read_bytes(args.data_safe))
        risky, safe = align(load_asset_csv(args.data_risky, "risky"), load_asset_csv(args.data_safe, "safe"))
        info = {"source": "csv-pair", "paths": [args.data_risky, args.data_safe]}
    else:
        path = _synthetic_path(args.synthetic)
        digest.update(_read_bytes(str(path)))
        syn = scenarios.from_dict(read_toml(path), default_seed=seed)
        risky, safe = generate_synthetic_market(syn)
        info = {"source": "synthetic", "paths": [str(path)], "synthetic_seed": syn.seed}
    info["sha256"] = digest.hexdigest()
    info["n_days"] = len(risky)
    return MarketData(risky, safe), info


def _synthetic_path(arg: str) -> Path:
    path = Path(arg)
    if path.is_file():
        return path
    bundled = PRESET_DIR / "markets" / f"{arg}.toml"
    return bundled if bundled.is_file() else path


# ------------------------------------------------------------------ runners


def _qtable_dir(out: Path, cfg: ExperimentConfig) -> Path:
    d = out / f"{cfg.tag}_qtables"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _run_chapter4(cfg, years, seed, jobs, out, save_tables) -> list[Path]:
    res = P.run_chapter4(years, cfg, seed, jobs)
    tag = cfg.tag
    paths = [R.write_results_csv(out / f"{tag}_results.csv", res.rows)]
    pooled = np.concatenate(list(res.random_samples.values()))
    paths.append(R.write_histogram_csv(out / f"{tag}_random_histogram.csv", R.sharpe_histogram(pooled, cfg.histogram_bins)))
    stats = {m: R.summary_stats(list(res.sharpe(m).values())) for m in ("base", "nonstationary", "random_median")}
    stats["random_all"] = R.summary_stats(pooled)
    paths.append(R.write_sweep_csv(out / f"{tag}_summary.csv", stats))
    for model in ("base", "nonstationary", "random_median"):
        print(f"{cfg.id} {model:>14s} mean Sharpe {res.mean_sharpe(model):+.3f}")
    if save_tables:
        d = _qtable_dir(out, cfg)
        for model, tables in res.tables.items():
            for fy, q in tables.items():
                p = d / f"{model}_{fy}.csv"
                save_q_table(q, p)
                paths.append(p)
    return paths


def _empty_reward(cfg: ExperimentConfig) -> ExperimentConfig:
    return cfg.replace(
        id=f"{cfg.id}-base",
        target_levels=[],
        target_bonuses=[],
        dd_levels=[],
        dd_penalties=[],
        state_target_levels=0,
        state_dd_levels=0,
    )


def _behavior_stats(log: R.BehaviorLog) -> dict:
    stats = {}
    for q in range(4):
        stats[f"Q{q + 1}"] = {"signal_diff_pp": R.signal_behavior_diff(log, q), "risky_rate": R.preference_rate(log, log.quarter == q)}
    stats["all"] = {"signal_diff_pp": R.signal_behavior_diff(log), "risky_rate": R.preference_rate(log)}
    return stats


def _save_case_tables(case: P.CaseResult, out: Path, prefix: str = "") -> list[Path]:
    d = _qtable_dir(out, case.cfg)
    paths = []
    for fy, q in case.tables.items():
        p = d / f"{prefix}{fy}.csv"
        save_q_table(q, p)
        paths.append(p)
    return paths


def _run_constraint_case(cfg, years, seed, jobs, out, save_tables) -> list[Path]:
    tag = cfg.tag
    case = P.run_constraint_case(years, cfg, seed, jobs)
    rows = [(y.label, cfg.id, y.sharpe_annual) for y in case.years]
    paths = [R.write_results_csv(out / f"{tag}_results.csv", rows)]
    paths.append(R.write_sweep_csv(out / f"{tag}_behavior.csv", _behavior_stats(case.log)))
    print(f"{cfg.id} mean in-sample Sharpe {np.mean(case.sharpes):+.3f}")
    if not cfg.reward.is_empty:
        base = P.run_constraint_case(years, _empty_reward(cfg), seed, jobs)
        cells = R.case_delta_table(case.log, base.log, cfg.reward)
        paths.append(R.write_delta_csv(out / f"{tag}_delta.csv", cfg.id, cells))
        print(R.format_delta_table(cells, title=f"{cfg.id} risky preference vs basic reward (pp)"))
    if save_tables:
        paths += _save_case_tables(case, out)
    return paths


def _sweep_outputs(cfg, cases: dict, label, out, save_tables) -> list[Path]:
    tag = cfg.tag
    rows, stats = [], {}
    for key, case in cases.items():
        name = label(key)
        rows += [(y.label, name, y.sharpe_annual) for y in case.years]
        stats[name] = R.summary_stats(case.sharpes)
        print(f"{cfg.id} {name:>16s} median Sharpe {stats[name]['median']:+.3f}")
    paths = [R.write_results_csv(out / f"{tag}_results.csv", rows), R.write_sweep_csv(out / f"{tag}_sweep.csv", stats)]
    if save_tables:
        for key, case in cases.items():
            paths += _save_case_tables(case, out, prefix=f"{label(key)}_")
    return paths


def _run_accuracy(cfg, years, seed, jobs, out, save_tables) -> list[Path]:
    cases = P.run_accuracy_sweep(years, cfg, master_seed=seed, jobs=jobs)
    return _sweep_outputs(cfg, cases, lambda a: f"acc={a:g}", out, save_tables)


def _run_rebalance(cfg, years, seed, jobs, out, save_tables) -> list[Path]:
    cases = P.run_rebalance_sweep(years, cfg, master_seed=seed, jobs=jobs)
    return _sweep_outputs(cfg, cases, lambda f: f.name.lower(), out, save_tables)


def _run_phase(cfg, years, seed, jobs, out, save_tables) -> list[Path]:
    res = P.run_phase_accuracy(years, cfg, master_seed=seed, jobs=jobs)
    paths = _sweep_outputs(cfg, res.cases, lambda b: f"acc_b={b:g}", out, save_tables)
    stats = {}
    for acc_b, case in res.cases.items():
        log = case.log
        stats[round(acc_b - res.acc_a, 10)] = {
            "following_diff_pp": R.phase_following_difference(log),
            "following_rate_a": R.following_rate(log, log.phase == 0),
            "following_rate_b": R.following_rate(log, log.phase == 1),
        }
    paths.append(R.write_sweep_csv(out / f"{cfg.tag}_phase.csv", stats))
    return paths


RUNNERS = {
    "chapter4": _run_chapter4,
    "constraint_case": _run_constraint_case,
    "accuracy_sweep": _run_accuracy,
    "rebalance_sweep": _run_rebalance,
    "phase_accuracy": _run_phase,
}


def run_experiment(cfg, data, data_info, seed, jobs, out: Path, save_tables=True) -> Path:
    """Run one experiment, write its files and manifest; returns the manifest path."""
    t0 = time.perf_counter()
    years = P.prepare_years(data, cfg.features)
    logger.info("%s: %d complete fiscal years, master seed %d", cfg.id, len(years), seed)
    paths = RUNNERS[cfg.runner](cfg, years, seed, jobs, out, save_tables)
    manifest = {
        "version": __version__,
        "config": cfg.to_dict(),
        "master_seed": seed,
        "data": data_info,
        "fiscal_years": [y.label for y in years],
        "outputs": sorted(str(p.relative_to(out)) for p in paths),
        "duration_s": round(time.perf_counter() - t0, 3),
    }
    return R.write_manifest(out / f"{cfg.tag}_manifest.json", manifest)


# ------------------------------------------------------------------ commands


def cmd_run(args) -> int:
    configs = resolve_configs(args.config)
    out = Path(args.out or os.environ.get(OUT_ENV) or "out")
    out.mkdir(parents=True, exist_ok=True)
    data_seed = args.seed if args.seed is not None else configs[0].agent.seed
    data, info = load_data(args, data_seed)
    for cfg in configs:
        seed = args.seed if args.seed is not None else cfg.agent.seed
        manifest = run_experiment(cfg, data, info, seed, args.jobs, out, save_tables=not args.no_qtables)
        print(f"wrote {manifest}")
    return EXIT_OK


def cmd_validate(args) -> int:
    for cfg in resolve_configs(args.config):
        print(f"ok {cfg.id}: runner={cfg.runner} algo={cfg.algo.value} states={cfg.state_space.n_states}")
    return EXIT_OK


def describe_q_table(q: QTable) -> str:
    """State-space shape, value ranges per action, and greedy counts per component."""
    space = q.space
    lines = [
        "components: " + ", ".join(f"{name}({dim})" for name, dim in space.components),
        f"states: {space.n_states}  cells: {q.values.size}",
        "action      min          max          mean",
    ]
    for a in Action:
        v = q.values[:, a]
        lines.append(f"{a.name:<10s} {v.min():<12.6g} {v.max():<12.6g} {v.mean():.6g}")
    # greedy action per state, or "tie" when several actions share the maximum
    cols = [a.name for a in Action] + ["tie"]
    greedy = {}
    for key in all_state_keys(space):
        row = q.values[state_index(key, space)]
        best = np.flatnonzero(row == row.max())
        greedy[key] = Action(best[0]).name if len(best) == 1 else "tie"
    lines.append("greedy counts by component value (" + " / ".join(cols) + "):")
    for i, (name, dim) in enumerate(space.components):
        for value in range(dim):
            picks = [g for k, g in greedy.items() if k[i] == value]
            counts = " / ".join(str(picks.count(c)) for c in cols)
            lines.append(f"  {name}={value}: {counts}")
    return "\n".join(lines)


def cmd_inspect_qtable(args) -> int:
    _read_bytes(args.table)
    print(describe_q_table(load_q_table(args.table)))
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rlalloc", description="Tabular RL two-asset allocation backtests.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment or suite")
    run.add_argument("--config", required=True, help="TOML file or bundled preset name (e.g. '#002', ch4)")
    run.add_argument("--data", help="CSV with date,risky,safe columns")
    run.add_argument("--data-risky", help="CSV with date,price for the risky asset")
    run.add_argument("--data-safe", help="CSV with date,price for the non-risky asset")
    run.add_argument("--synthetic", help="synthetic-market TOML, or a bundled market name")
    run.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
    run.add_argument("--seed", type=int, help="master seed override")
    run.add_argument("--jobs", type=int, default=1, help="worker threads per experiment")
    run.add_argument("--no-qtables", action="store_true", help="skip writing learned Q-tables")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="parse and cross-check a config without running it")
    val.add_argument("--config", required=True)
    val.set_defaults(func=cmd_validate)

    ins = sub.add_parser("inspect-qtable", help="summarise a saved Q-table")
    ins.add_argument("table")
    ins.set_defaults(func=cmd_inspect_qtable)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("config error: jobs: must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except RlallocError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # invariant violations surface as exit 4, not a traceback
        logger.debug("unhandled", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
