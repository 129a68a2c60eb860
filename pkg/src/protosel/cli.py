"""Command line entry point: ``protosel {gen,select,pivots,bench}``.

On failure every subcommand exits nonzero after printing a single JSON line
``{"error": <type>, "message": <text>}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .dataset import SplitSpec, generate_blobs, save_binary, save_csv, split_indices
from .dissim import Measure, OnDemandProvider
from .dspace import save_manifest
from .fitness import FitnessContext
from .harness import (
    ExperimentConfig, coerce, load_dataset, parse_selector, read_config, run_experiment, select, summarize,
)
from .hashing import train_pivots


def _add_data_args(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="CSV or binary dataset file")
    src.add_argument("--blobs", help="synthetic data as classes,per_class,q,spread,seed")
    p.add_argument("--label-column", default="label")
    p.add_argument("--measure", default="euclidean", help="euclidean, manhattan or minkowski:<p>")


def _load(args):
    return load_dataset(ExperimentConfig(data=args.data, blobs=args.blobs, label_column=args.label_column))


def cmd_gen(args) -> int:
    ds = generate_blobs(args.classes, args.per_class, args.q, args.spread, args.seed)
    out = Path(args.out)
    if args.format == "bin" or (args.format is None and out.suffix == ".bin"):
        save_binary(ds, out)
    else:
        save_csv(ds, out, args.label_column)
    print(f"wrote {ds.n} objects x {ds.q} features to {out}")
    return 0


def cmd_select(args) -> int:
    ds = _load(args)
    provider = OnDemandProvider(ds, Measure.parse(args.measure))
    spec = SplitSpec(args.validation_fraction, 1.0 - args.validation_fraction, 0.0, seed=args.seed)
    validation = split_indices(ds.labels, spec)[0] if args.validation_fraction < 1 else np.arange(ds.n)
    name, overrides = parse_selector(args.method)
    cfg = ExperimentConfig(data=args.data, blobs=args.blobs, seed=args.seed)
    for key in ("population_size", "reproduction_prob", "mutation_prob", "generations", "pivots"):
        value = getattr(args, key)
        if value is not None:
            setattr(cfg, key, value)
    ctx = FitnessContext(provider, validation, ds.labels[validation], labels=ds.labels)
    protos = select(name, overrides, ctx, validation, args.k, args.seed, cfg)
    if args.out:
        save_manifest(protos, args.out, evals=provider.eval_count, dataset_revision=ds.revision)
    print(" ".join(str(i) for i in protos.indices))
    return 0


def cmd_pivots(args) -> int:
    ds = _load(args)
    provider = OnDemandProvider(ds, Measure.parse(args.measure))
    table = train_pivots(provider, np.arange(ds.n), p=args.p, seed=args.seed, max_rounds=args.max_rounds)
    table.save(args.out)
    print(f"trained {table.p} pivots on {table.sample_size} objects -> {args.out}")
    return 0


def cmd_bench(args) -> int:
    cfg = read_config(args.config) if args.config else ExperimentConfig()
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    for name in types:
        value = getattr(args, name, None)
        if value is None:
            continue
        setattr(cfg, name, coerce(name, types[name], value) if isinstance(value, str) else value)
    if args.data is not None:
        cfg.blobs = None
    records = run_experiment(cfg)
    for row in summarize(records, cfg.classifiers):
        print(
            f"{row['selector']:<18} k={row['k']:<3} {row['classifier']:<4} "
            f"error={row['mean_error']:.4f}+-{row['sd_error']:.4f} "
            f"sel={row['mean_selection_s']:.3f}s evals={row['mean_evals']:.0f}"
        )
    if cfg.output_dir:
        print(f"records written to {Path(cfg.output_dir) / 'records.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="protosel", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic Gaussian-blob dataset")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--per-class", type=int, default=300)
    p.add_argument("--q", type=int, default=5)
    p.add_argument("--spread", type=float, default=0.6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--label-column", default="label")
    p.add_argument("--format", choices=("csv", "bin"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("select", help="run one selector and print the chosen indices")
    _add_data_args(p)
    p.add_argument("--method", default="ga-sup", help="selector, e.g. fft or 'ga-mst(mp=0.1)'")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--validation-fraction", type=float, default=1.0)
    p.add_argument("-S", "--population-size", dest="population_size", type=int)
    p.add_argument("--rp", dest="reproduction_prob", type=float)
    p.add_argument("--mp", dest="mutation_prob", type=float)
    p.add_argument("--iter", dest="generations", type=int)
    p.add_argument("--pivots", type=int)
    p.add_argument("--out", help="write a JSON run manifest here")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("pivots", help="train a pivot table and save it as JSON")
    _add_data_args(p)
    p.add_argument("--p", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-rounds", type=int, default=16)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pivots)

    p = sub.add_parser("bench", help="full sweep over selectors, k values and repetitions")
    p.add_argument("--config", help="flat key = value file overriding the defaults")
    p.add_argument("--seed", type=int, required=True)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--data")
    src.add_argument("--blobs")
    p.add_argument("--label-column", dest="label_column")
    p.add_argument("--measure")
    p.add_argument("--validation-fraction", dest="validation_fraction", type=float)
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--test-fraction", dest="test_fraction", type=float)
    p.add_argument("--overlap", action="store_const", const=True, default=None)
    p.add_argument("--selectors", help="';'-separated selector specs")
    p.add_argument("--k-list", dest="k_list", help="comma-separated, e.g. 10,20,30,40")
    p.add_argument("--repetitions", type=int)
    p.add_argument("--classifiers", help="comma-separated subset of 1nn,ldc")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("-S", "--population-size", dest="population_size", type=int)
    p.add_argument("--rp", dest="reproduction_prob", type=float)
    p.add_argument("--mp", dest="mutation_prob", type=float)
    p.add_argument("--iter", dest="generations", type=int)
    p.add_argument("--pivots", type=int)
    p.add_argument("--ldc-reg", dest="ldc_reg", type=float)
    p.add_argument("--cache-size", dest="cache_size", type=int)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
