"""Command-line entry point.

Exit codes: 0 success, 1 validation error (flags, files, config), 2 runtime
failure. Every run prints the resolved config and seed before doing work, and
all randomness flows from --seed.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import CoarseflowError


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we use 1
        self.print_usage(sys.stderr)
        raise ValidationError(message)


class ValidationError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="coarseflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, ckpt=False, data=False, out=False):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1)
        if ckpt:
            p.add_argument("--ckpt", required=True, help="checkpoint prefix (no extension)")
        if data:
            p.add_argument("--data", help="SMILES dataset file")
        if out:
            p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", help="JSON config document")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint prefix")
    p.add_argument("--resume", help="checkpoint prefix to continue from")
    p.add_argument("--epochs", type=int, help="override config epochs")
    p.add_argument("--seed", type=int, help="override config seed")
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("sample", help="generate molecules")
    common(p, ckpt=True, data=True)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--temperature", type=float, default=0.7)
    p.add_argument("--out", help="samples TSV path (default <ckpt>.samples.tsv)")

    p = sub.add_parser("reconstruct", help="measure reconstruction rate")
    common(p, ckpt=True)
    p.add_argument("--data", required=True)

    p = sub.add_parser("optimize", help="latent-space property optimization")
    common(p, ckpt=True)
    p.add_argument("--data", required=True, help="dataset for surrogate + starts")
    p.add_argument("--n", type=int, default=20, help="number of starts")
    p.add_argument("--scorer", default="carbon_count", help="property scorer name")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--delta", type=float, default=None,
                   help="Tanimoto constraint threshold (omit for unconstrained)")
    p.add_argument("--surrogate-epochs", type=int, default=5)
    p.add_argument("--out", help="TSV path (default <ckpt>.optimized.tsv)")

    p = sub.add_parser("resample", help="hierarchical latent resampling grid")
    common(p, ckpt=True)
    p.add_argument("--data", required=True, help="file whose first molecule is resampled")
    p.add_argument("--n", type=int, default=4, help="samples per level")
    p.add_argument("--temperature", type=float, default=0.7)
    p.add_argument("--levels", type=int, default=None, help="limit to the first J levels")
    p.add_argument("--out", help="TSV path (default <ckpt>.resample_grid.tsv)")

    p = sub.add_parser("stats", help="substructure frequency over fresh samples")
    common(p, ckpt=True)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--k", type=int, default=None, help="cluster size (default: first coarsen factor)")
    p.add_argument("--temperature", type=float, default=0.7)
    p.add_argument("--out", help="TSV path (default <ckpt>.stats.tsv)")

    p = sub.add_parser("gradcheck", help="finite-difference gradient conformance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("conformance", help="layer invertibility/logdet table")
    p.add_argument("--layers", default="all", help="'all' or comma-separated substrings")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    return parser


def _print_config(doc: dict, seed: int) -> None:
    print("resolved config:")
    print(json.dumps(doc, indent=1, default=str))
    print(f"seed: {seed}")


def _load_dataset(path: str, table):
    from .smiles import read_smiles_file

    return read_smiles_file(path, table)


def _run_train(args) -> int:
    from .config import load_config
    from .training import train

    cfg = load_config(args.config)
    if args.epochs is not None:
        cfg.epochs = args.epochs
    if args.seed is not None:
        cfg.seed = args.seed
    _print_config(cfg.to_json(), cfg.seed)
    graphs = _load_dataset(args.data, cfg.table)
    result = train(cfg, graphs, args.out, resume_prefix=args.resume)
    print(f"trained {len(result.epoch_losses)} epochs; final nll {result.epoch_losses[-1]:.4f}")
    print(f"checkpoint: {result.checkpoint_prefix}.json/.bin")
    print(f"log: {result.log_path}")
    return 0


def _run_sample(args) -> int:
    from .checkpoint import load_checkpoint
    from .generation import sample, write_samples_tsv
    from .smiles import canonical_smiles
    from .graph import bfs_reorder

    model, cfg, _ = load_checkpoint(args.ckpt)
    _print_config(cfg.to_json(), args.seed)
    train_set = set()
    if args.data:
        train_set = {canonical_smiles(bfs_reorder(g)) for g in _load_dataset(args.data, cfg.table)}
    report = sample(model, cfg.table, args.n, args.temperature, args.seed,
                    train_set=train_set, threads=max(1, args.threads))
    out = args.out or f"{args.ckpt}.samples.tsv"
    write_samples_tsv(report, cfg.table, out)
    for key, value in report.metrics.as_dict().items():
        if value is not None:
            print(f"{key}: {value:.4f}")
    print(f"samples: {out}")
    return 0


def _run_reconstruct(args) -> int:
    from .checkpoint import load_checkpoint
    from .generation import reconstruct

    model, cfg, _ = load_checkpoint(args.ckpt)
    _print_config(cfg.to_json(), args.seed)
    graphs = _load_dataset(args.data, cfg.table)
    ok, total = reconstruct(model, graphs, cfg, args.seed)
    print(f"reconstruction: {ok}/{total} = {ok / total:.4f}")
    return 0


def _run_optimize(args) -> int:
    from .checkpoint import load_checkpoint
    from .optimize import (
        SCORERS,
        encode_dataset_latents,
        fit_surrogate,
        lso,
        write_optimized_tsv,
    )
    from .model import LatentPack

    model, cfg, _ = load_checkpoint(args.ckpt)
    _print_config(cfg.to_json(), args.seed)
    if args.scorer not in SCORERS:
        raise ValidationError(f"unknown scorer {args.scorer!r}; choose from {sorted(SCORERS)}")
    scorer = SCORERS[args.scorer]
    graphs = _load_dataset(args.data, cfg.table)
    surrogate, losses = fit_surrogate(model, graphs, scorer, cfg, args.seed,
                                      epochs=args.surrogate_epochs)
    print(f"surrogate mse per epoch: {[round(x, 4) for x in losses]}")
    # lowest-scoring molecules become the optimization starts
    ranked = sorted(range(len(graphs)), key=lambda i: (scorer(graphs[i]), i))
    starts = [graphs[i] for i in ranked[: args.n]]
    pack = encode_dataset_latents(model, starts, cfg, args.seed)
    constraint = (starts, args.delta) if args.delta is not None else None
    records = lso(model, surrogate, pack, scorer, cfg.table,
                  alpha=args.alpha, steps=args.steps, constraint=constraint)
    out = args.out or f"{args.ckpt}.optimized.tsv"
    write_optimized_tsv(records, out)
    improvements = [r.improvement for r in records]
    success = sum(r.success for r in records) / len(records)
    print(f"mean improvement: {sum(improvements) / len(improvements):.4f}")
    print(f"success rate: {success:.4f}")
    print(f"results: {out}")
    return 0


def _run_resample(args) -> int:
    from .checkpoint import load_checkpoint
    from .generation import resample_hierarchy, write_resample_tsv

    model, cfg, _ = load_checkpoint(args.ckpt)
    _print_config(cfg.to_json(), args.seed)
    graphs = _load_dataset(args.data, cfg.table)
    if not graphs:
        raise ValidationError(f"no molecules in {args.data}")
    grid = resample_hierarchy(model, graphs[0], cfg, args.n, args.temperature, args.seed)
    if args.levels is not None:
        grid.rows = grid.rows[: args.levels]
    out = args.out or f"{args.ckpt}.resample_grid.tsv"
    write_resample_tsv(grid, out)
    print(f"original: {grid.original}")
    print(f"grid: {out}")
    return 0


def _run_stats(args) -> int:
    from .checkpoint import load_checkpoint
    from .generation import sample, substructure_stats, write_stats_tsv

    model, cfg, _ = load_checkpoint(args.ckpt)
    _print_config(cfg.to_json(), args.seed)
    k = args.k if args.k is not None else (cfg.atom.coarsen_factors[0] if cfg.atom.coarsen_factors else 2)
    report = sample(model, cfg.table, args.n, args.temperature, args.seed,
                    threads=max(1, args.threads))
    stats = substructure_stats(report.corrected, k)
    out = args.out or f"{args.ckpt}.stats.tsv"
    write_stats_tsv(stats, out)
    for smi, count in stats[:10]:
        print(f"{count:6d}  {smi}")
    print(f"stats: {out}")
    return 0


def _run_gradcheck(args) -> int:
    from .gradcheck import gradient_conformance

    report = gradient_conformance(seed=args.seed)
    print(report.table)
    print(f"parameters checked: {report.n_params}; worst relative error: {report.worst:.3e}")
    if not report.passed:
        print("gradcheck FAILED", file=sys.stderr)
        return 2
    return 0


def _run_conformance(args) -> int:
    from .conformance import format_table, layer_cases

    checks = layer_cases(seed=args.seed)
    if args.layers != "all":
        wanted = [w.strip() for w in args.layers.split(",")]
        checks = [c for c in checks if any(w in c.name for w in wanted)]
        if not checks:
            raise ValidationError(f"no layers match {args.layers!r}")
    print(format_table(checks))
    if not all(c.passed for c in checks):
        print("conformance FAILED", file=sys.stderr)
        return 2
    return 0


_RUNNERS = {
    "train": _run_train,
    "sample": _run_sample,
    "reconstruct": _run_reconstruct,
    "optimize": _run_optimize,
    "resample": _run_resample,
    "stats": _run_stats,
    "gradcheck": _run_gradcheck,
    "conformance": _run_conformance,
}


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return _RUNNERS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except CoarseflowError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
