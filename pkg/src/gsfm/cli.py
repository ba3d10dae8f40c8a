"""Command-line entry point for reproducible fits, checks and simulations.

Subcommands::

    fit        NUTS fit of the frailty model; draws, summary, curves, manifest
    km         Kaplan-Meier curves per (stratum, recurrence)
    gen-data   one synthetic dataset from the built-in scenario
    simulate   alias of gen-data
    replicate  replicated generate-and-fit study with Table-style metrics

Every run writes a ``manifest.json`` recording the configuration, the seed,
package versions and wall time.  Precedence for settings: command-line flag,
then ``--config`` JSON file, then environment (``GSFM_JOBS``), then default.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .data import CsvSchema, load_bladder, load_csv, write_csv
from .diagnostics import format_summary, write_summary_csv
from .fit import fit_gsfm
from .km import km_fit
from .model import Hyperparams
from .sampler import NutsConfig
from .simgen import gen_dataset, paper_scenario, replicate_study

_CONFIG_KEYS = ("L", "M", "beta_sd", "scale_prior_scale", "seed", "chains", "warmup", "draws")


def _read_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    unknown = set(cfg) - set(_CONFIG_KEYS)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def _setting(args, cfg_file: dict, flag: str, file_key: str, default):
    value = getattr(args, flag, None)
    if value is not None:
        return value
    if file_key in cfg_file:
        return cfg_file[file_key]
    return default


def _build_configs(args) -> tuple[Hyperparams, NutsConfig, int]:
    cfg_file = _read_config(getattr(args, "config", None))
    hyper = Hyperparams(
        truncation=int(_setting(args, cfg_file, "trunc", "L", 12)),
        mass=float(_setting(args, cfg_file, "mass", "M", 1.0)),
        beta_prior_sd=float(_setting(args, cfg_file, "beta_sd", "beta_sd", np.sqrt(1000.0))),
        scale_prior_scale=float(
            _setting(args, cfg_file, "scale_prior_scale", "scale_prior_scale", 5.0)
        ),
    )
    nuts = NutsConfig(
        chains=int(_setting(args, cfg_file, "chains", "chains", 4)),
        warmup=int(_setting(args, cfg_file, "warmup", "warmup", 2000)),
        draws=int(_setting(args, cfg_file, "draws", "draws", 3000)),
        seed=int(_setting(args, cfg_file, "seed", "seed", 0)),
    )
    jobs = args.jobs if args.jobs is not None else int(os.environ.get("GSFM_JOBS", "1"))
    return hyper, nuts, jobs


def _load_dataset(args):
    if args.data == "bladder":
        return load_bladder(prepared=True)
    schema = CsvSchema()
    return load_csv(args.data, schema)


def _write_manifest(outdir: Path, command: str, settings: dict, wall: float, outputs: list[str]):
    manifest = {
        "command": command,
        "settings": settings,
        "versions": {
            "gsfm": __version__,
            "numpy": np.__version__,
        },
        "wall_time_s": wall,
        "outputs": outputs,
    }
    import jax
    import scipy

    manifest["versions"]["scipy"] = scipy.__version__
    manifest["versions"]["jax"] = jax.__version__
    with open(outdir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_draws_csv(result, path: Path):
    names = result.names
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["chain", "iteration"] + names)
        for c, chain in enumerate(result.chains):
            for it in range(chain.constrained.shape[0]):
                w.writerow(
                    [c + 1, it + 1] + [f"{x:.17g}" for x in chain.constrained[it]]
                )


def _write_sampler_stats(result, path: Path):
    stats = []
    for c, chain in enumerate(result.chains):
        stats.append(
            {
                "chain": c + 1,
                "step_size": chain.adapted_step_size,
                "n_divergent": chain.n_divergent,
                "mean_accept": float(chain.accept_stat.mean()),
                "mean_tree_depth": float(chain.tree_depth.mean()),
                "wall_time_s": chain.wall_time,
            }
        )
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_fit(args) -> int:
    hyper, nuts, jobs = _build_configs(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    ds = _load_dataset(args)
    t0 = time.perf_counter()
    result = fit_gsfm(ds, hyper, nuts, n_jobs=jobs, pooled=args.pooled)
    outputs = ["draws.csv", "summary.csv", "sampler_stats.json"]
    _write_draws_csv(result, outdir / "draws.csv")
    write_summary_csv(result.summary(full=True), outdir / "summary.csv")
    _write_sampler_stats(result, outdir / "sampler_stats.json")
    grid = np.linspace(0.05, args.curve_tmax, 100)
    if not args.pooled:
        for k in range(1, ds.n_recurrences + 1):
            for j in range(1, ds.n_strata + 1):
                curve = result.baseline_curves(grid, k, j)
                fname = f"baseline_k{k}_j{j}.csv"
                with open(outdir / fname, "w", encoding="utf-8", newline="") as fh:
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow(["t", "mean", "q025", "q975", "k", "j"])
                    for i in range(grid.size):
                        w.writerow(
                            [f"{grid[i]:.15g}", f"{curve['mean'][i]:.17g}",
                             f"{curve['q025'][i]:.17g}", f"{curve['q975'][i]:.17g}", k, j]
                        )
                outputs.append(fname)
    print(format_summary(result.summary()))
    settings = {
        "data": str(args.data), "pooled": args.pooled, "hyper": vars(hyper) | {},
        "nuts": {k: getattr(nuts, k) for k in ("chains", "warmup", "draws", "seed",
                                               "target_accept", "max_tree_depth")},
        "jobs": jobs,
    }
    _write_manifest(outdir, "fit", settings, time.perf_counter() - t0, outputs)
    return 0


def _cmd_km(args) -> int:
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    ds = _load_dataset(args)
    t0 = time.perf_counter()
    path = outdir / "km.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "survival", "n_risk", "n_event", "stratum", "recurrence"])
        for k in range(1, ds.n_recurrences + 1):
            for j in range(1, ds.n_strata + 1):
                recs = ds.select(k=k, j=j)
                if not recs:
                    continue
                curve = km_fit([o.gap_time for o in recs], [o.event for o in recs])
                for i in range(curve.times.size):
                    w.writerow(
                        [f"{curve.times[i]:.15g}", f"{curve.survival[i]:.15g}",
                         int(curve.n_risk[i]), int(curve.n_event[i]), j, k]
                    )
    _write_manifest(outdir, "km", {"data": str(args.data)}, time.perf_counter() - t0, ["km.csv"])
    print(f"wrote {path}")
    return 0


def _cmd_gen_data(args) -> int:
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    if args.scenario != "paper43":
        raise ValueError(f"unknown scenario '{args.scenario}' (available: paper43)")
    t0 = time.perf_counter()
    cfg = paper_scenario(seed=args.seed or 0)
    ds = gen_dataset(cfg, seed=args.seed or 0)
    path = outdir / "dataset.csv"
    write_csv(ds, path)
    _write_manifest(
        outdir, "gen-data",
        {"scenario": args.scenario, "seed": args.seed or 0},
        time.perf_counter() - t0, ["dataset.csv"],
    )
    print(f"wrote {path}")
    return 0


def _cmd_replicate(args) -> int:
    import functools

    from .fit import replication_fitter

    hyper, nuts, jobs = _build_configs(args)
    if args.warmup is None and args.draws is None:
        nuts = NutsConfig(chains=nuts.chains, warmup=1000, draws=1000, seed=nuts.seed)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    scenario = paper_scenario(replications=args.reps, seed=nuts.seed)
    t0 = time.perf_counter()
    fitter = functools.partial(replication_fitter, hyper=hyper, cfg=nuts)
    study = replicate_study(scenario, fitter, n_jobs=jobs)
    study.write_csv(outdir / "metrics.csv")
    if study.flagged:
        print(f"replications failing R-hat < 1.05: {study.flagged}")
    _write_manifest(
        outdir, "replicate",
        {"reps": args.reps, "seed": nuts.seed,
         "nuts": {"chains": nuts.chains, "warmup": nuts.warmup, "draws": nuts.draws}},
        time.perf_counter() - t0, ["metrics.csv"],
    )
    print(f"wrote {outdir / 'metrics.csv'}")
    return 0


def _add_common(sub, data=True):
    if data:
        sub.add_argument("--data", required=True,
                         help="input CSV path, or 'bladder' for the bundled dataset")
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--config", help="JSON config file (flags take precedence)")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--jobs", type=int, default=None,
                     help="worker processes (default: env GSFM_JOBS or 1)")


def _add_sampler_flags(sub):
    sub.add_argument("--chains", type=int, default=None)
    sub.add_argument("--warmup", type=int, default=None)
    sub.add_argument("--draws", type=int, default=None)
    sub.add_argument("--trunc", type=int, default=None, help="truncation level L")
    sub.add_argument("--mass", type=float, default=None, help="DP mass M")
    sub.add_argument("--beta-sd", dest="beta_sd", type=float, default=None)
    sub.add_argument("--scale-prior-scale", dest="scale_prior_scale", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gsfm", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    fit = subs.add_parser("fit", help="fit the frailty model by NUTS")
    _add_common(fit)
    _add_sampler_flags(fit)
    fit.add_argument("--pooled", action="store_true",
                     help="model-checking mode: one baseline, strata as indicators")
    fit.add_argument("--curve-tmax", type=float, default=5.0)
    fit.set_defaults(func=_cmd_fit)

    km = subs.add_parser("km", help="Kaplan-Meier curves per stratum and recurrence")
    _add_common(km)
    km.add_argument("--by", default="stratum,recurrence",
                    help="grouping (fixed: stratum,recurrence)")
    km.set_defaults(func=_cmd_km)

    for name in ("gen-data", "simulate"):
        gen = subs.add_parser(name, help="write one synthetic dataset CSV")
        _add_common(gen, data=False)
        gen.add_argument("--scenario", default="paper43")
        gen.set_defaults(func=_cmd_gen_data)

    rep = subs.add_parser("replicate", help="replicated simulation study")
    _add_common(rep, data=False)
    _add_sampler_flags(rep)
    rep.add_argument("--reps", type=int, default=30)
    rep.set_defaults(func=_cmd_replicate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
