"""Command-line driver: ``run``, ``decompose``, ``diagnose`` and ``ablate``.

Exit codes: 0 success, 2 bad configuration or missing input, 3 numeric abort.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .checkpoint import restore, save_checkpoint
from .config import ConfigError, dump_config, load_config, parse_overrides
from .encoder import init_encoder
from .graphio import GraphFormatError, load_graph
from .spectral import cached_spectral_view, to_spectral_view
from .trainer import VARIANTS, GraphContext, TrainConfig, TrainingDiverged, init_augmenter, train

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
CURVE_FIELDS = ("epoch", "encoder_objective", "augmenter_objective", "consistency", "lambda_drift", "coef_drift")


def _fail(code: int, msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def _load_graph(cfg: TrainConfig):
    if not cfg.edges or not cfg.features:
        raise ConfigError("config must name 'edges' and 'features' files")
    for key in ("edges", "features", "labels"):
        path = getattr(cfg, key)
        if path and not os.path.exists(path):
            raise ConfigError(f"{key} file {path} does not exist")
    name = cfg.name or None
    return load_graph(cfg.edges, cfg.features, cfg.labels or None, name=name)


def _spectral_view(graph, cfg: TrainConfig):
    if cfg.spectral_cache:
        return cached_spectral_view(graph, cfg.spectral_cache)
    return to_spectral_view(graph), False


def _run_dir(out: str, seed: int, tag: str = "") -> str:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = os.path.join(out, f"{stamp}-{tag + '-' if tag else ''}seed{seed}")
    path, k = base, 1
    while os.path.exists(path):
        path, k = f"{base}.{k}", k + 1
    os.makedirs(path)
    return path


def write_report(path: str, report) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_curves(path: str, report) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_FIELDS)
        for e in report.epochs:
            w.writerow([e["epoch"]] + [repr(e[k]) for k in CURVE_FIELDS[1:]])


def _write_table(path: str, columns: dict) -> None:
    keys = list(columns)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for row in zip(*(columns[k] for k in keys)):
            w.writerow([repr(v.item()) if hasattr(v, "item") else repr(v) for v in row])


def execute_run(cfg: TrainConfig, out: str, tag: str = "") -> tuple[int, str]:
    """Train, evaluate and write ``report.json``, ``curves.csv``, ``checkpoint.npz``."""
    graph = _load_graph(cfg)
    view, _ = _spectral_view(graph, cfg)
    run_dir = _run_dir(out, cfg.seed, tag)
    with open(os.path.join(run_dir, "config.cfg"), "w") as fh:
        fh.write(dump_config(cfg))
    try:
        result = train(graph, cfg, view)
    except TrainingDiverged as exc:
        exc.report.metrics["aborted"] = str(exc)
        write_report(os.path.join(run_dir, "report.json"), exc.report)
        write_curves(os.path.join(run_dir, "curves.csv"), exc.report)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC, run_dir
    write_report(os.path.join(run_dir, "report.json"), result.report)
    write_curves(os.path.join(run_dir, "curves.csv"), result.report)
    save_checkpoint(os.path.join(run_dir, "checkpoint.npz"), result.encoder, result.augmenter, cfg)
    return EXIT_OK, run_dir


def cmd_run(args) -> int:
    cfg = load_config(args.config, args.set, seed=args.seed)
    code, run_dir = execute_run(cfg, args.out)
    print(run_dir)
    return code


def cmd_decompose(args) -> int:
    cfg = load_config(args.config, args.set)
    if not cfg.spectral_cache:
        cfg = cfg.replace(spectral_cache=os.path.join(args.out, "spectral-cache"))
    graph = _load_graph(cfg)
    start = time.perf_counter()
    view, hit = cached_spectral_view(graph, cfg.spectral_cache)
    elapsed = time.perf_counter() - start
    summary = {
        "cache_hit": hit,
        "cache_dir": cfg.spectral_cache,
        "seconds": elapsed,
        "n": view.n,
        "lambda_min": float(view.lambdas.min()),
        "lambda_max": float(view.lambdas.max()),
        "residuals": view.residuals(X=graph.features),
    }
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "decompose.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    print(f"{'cache hit' if hit else 'decomposed'}: n={view.n} in {elapsed:.2f}s ({cfg.spectral_cache})")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    from .checkpoint import read_checkpoint
    from .diagnostics import diagnose

    if args.checkpoint:
        if not os.path.exists(args.checkpoint):
            return _fail(EXIT_CONFIG, f"checkpoint {args.checkpoint} not found")
        saved, _ = read_checkpoint(args.checkpoint)
        saved.update(parse_overrides(args.set))
        try:
            cfg = TrainConfig(**saved)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
    elif args.config:
        cfg = load_config(args.config, args.set)
    else:
        return _fail(EXIT_CONFIG, "diagnose needs --checkpoint or --config")
    graph = _load_graph(cfg)
    view, _ = _spectral_view(graph, cfg)
    ctx = GraphContext.build(graph, cfg, view)
    if args.checkpoint:
        _, _, aug = restore(args.checkpoint, ctx)
    else:
        # untrained augmenter, initialized exactly as train() would
        rng = np.random.default_rng(cfg.seed)
        init_encoder(ctx.X.shape[1], cfg.hidden, cfg.embed_dim, cfg.layers, rng)
        aug = init_augmenter(ctx, cfg, rng)

    tables, summary = diagnose(graph, ctx.view, aug, args.flips, cfg.seed)
    summary["checkpoint"] = os.path.abspath(args.checkpoint) if args.checkpoint else None
    os.makedirs(args.out, exist_ok=True)
    for name, columns in tables.items():
        _write_table(os.path.join(args.out, f"{name}.csv"), columns)
    with open(os.path.join(args.out, "diagnose.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    print(
        f"channel-energy spread {summary['energy_spread_before']:.3f} -> {summary['energy_spread_after']:.3f}; "
        f"|lambda' - lambda| = {summary['lambda_drift_norm']:.4f}"
    )
    return EXIT_OK


def _ablate_one(job):
    cfg_dict, out, tag = job
    code, run_dir = execute_run(TrainConfig(**cfg_dict), out, tag)
    return tag, cfg_dict["seed"], code, run_dir


def cmd_ablate(args) -> int:
    base = load_config(args.config, args.set)
    names = [v.strip() for v in args.variants.split(",") if v.strip()]
    unknown = [v for v in names if v not in VARIANTS]
    if unknown:
        return _fail(EXIT_CONFIG, f"unknown variants {unknown}; choose from {sorted(VARIANTS)}")
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [base.seed]
    out = os.path.join(args.out, time.strftime("ablate-%Y%m%d-%H%M%S"))
    os.makedirs(out, exist_ok=True)
    jobs = []
    for name in names:
        for seed in seeds:
            try:
                cfg = base.replace(seed=seed, **VARIANTS[name])
            except ValueError as exc:
                return _fail(EXIT_CONFIG, f"variant {name}: {exc}")
            jobs.append((cfg.to_dict(), out, name))
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_ablate_one, jobs))
    else:
        results = [_ablate_one(j) for j in jobs]
    rows = []
    for tag, seed, code, run_dir in results:
        row = {"variant": tag, "seed": seed, "exit_code": code, "run_dir": run_dir}
        with open(os.path.join(run_dir, "report.json")) as fh:
            row.update(json.load(fh)["metrics"])
        rows.append(row)
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)
    print(out)
    for row in rows:
        acc = row.get("accuracy_mean", float("nan"))
        print(f"{row['variant']:>14s} seed {row['seed']}: acc {acc:.4f}  drift {row.get('final_lambda_drift', float('nan')):.4f}")
    return max(code for _, _, code, _ in results)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lac", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="key = value configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--out", default="runs", help="output directory")

    p = sub.add_parser("run", help="train and evaluate one configuration")
    common(p)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("decompose", help="eigendecompose the dataset into the spectral cache")
    common(p)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("diagnose", help="channel energy, eigenvalue drift and edge-flip tables")
    common(p, config_required=False)
    p.add_argument("--checkpoint", default=None, help="trained checkpoint (default: untrained augmenter from --config)")
    p.add_argument("--flips", type=int, default=10, help="random edge flips to compare (0 to skip)")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("ablate", help="run named variants of a base configuration")
    common(p)
    p.add_argument("--variants", required=True, help=f"comma list from {','.join(VARIANTS)}")
    p.add_argument("--seeds", default="", help="comma list of seeds (default: the config seed)")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, GraphFormatError, FileNotFoundError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except (TrainingDiverged, FloatingPointError, ArithmeticError) as exc:
        return _fail(EXIT_NUMERIC, str(exc))


if __name__ == "__main__":
    sys.exit(main())
