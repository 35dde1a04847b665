"""Command-line harness: generate, train, eval, and the two benchmarks.

Heavy imports are deferred until after --threads is translated into the
BLAS/OpenMP environment variables; they only take effect if set before
numpy loads.
"""

import argparse
import json
import os
import sys

from .errors import CheckpointError, ConfigError

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)

_KIND_TO_NAME = {"wugnn": "wugnn", "gnn_baseline": "gnn"}
_NAME_TO_KIND = {"wugnn": "wugnn", "gnn": "gnn_baseline"}


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", default=argparse.SUPPRESS, metavar="FILE",
        help="TOML run configuration (defaults used when omitted)",
    )
    common.add_argument(
        "--seed", type=int, default=argparse.SUPPRESS,
        help="override the seed from the config",
    )
    common.add_argument(
        "--out-dir", default=argparse.SUPPRESS, metavar="DIR",
        help="directory for emitted files (default: current directory)",
    )
    common.add_argument(
        "--threads", type=int, default=argparse.SUPPRESS,
        help="worker thread count, recorded in reports (default 1 for timing fairness)",
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="d2dpower",
        description="D2D power allocation benchmark: WMMSE, generic GNN, unrolled GNN.",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    sub.add_parser("generate", parents=[common], help="write the configured dataset to disk")

    train = sub.add_parser("train", parents=[common], help="train a model and save a checkpoint")
    train.add_argument(
        "--model", choices=sorted(_NAME_TO_KIND), default=None,
        help="which model to train (default: the config's model_kind)",
    )

    ev = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint against the reference solver")
    ev.add_argument("--checkpoint", required=True, metavar="FILE")
    ev.add_argument("--split", choices=("train", "val", "test"), default="test")
    ev.add_argument(
        "--n", type=int, default=None,
        help="evaluate on fresh instances of this size instead of a dataset split",
    )
    ev.add_argument("--count", type=int, default=50, help="fresh instance count for --n")

    bench = sub.add_parser("bench", parents=[common], help="run a benchmark sweep")
    bench_sub = bench.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for experiment in ("scalability", "timing"):
        b = bench_sub.add_parser(experiment, parents=[common])
        b.add_argument("--wugnn", default=None, metavar="FILE", help="unrolled-GNN checkpoint")
        b.add_argument("--gnn", default=None, metavar="FILE", help="baseline-GNN checkpoint")
    return parser


def _load_run_config(args):
    from .config import default_config, load_config

    path = getattr(args, "config", None)
    return load_config(path) if path is not None else default_config()


def _effective_seed(args, cfg) -> int:
    seed = getattr(args, "seed", None)
    return int(seed) if seed is not None else cfg.train.seed


def _out_dir(args) -> str:
    out = getattr(args, "out_dir", ".")
    os.makedirs(out, exist_ok=True)
    return out


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_generate(args, cfg, seed, out) -> int:
    import numpy as np

    from .training import make_dataset

    counts = (cfg.train.n_train, cfg.train.n_val, cfg.train.n_test)
    ds = make_dataset(cfg.channel, counts, base_seed=seed)
    npz_path = os.path.join(out, "dataset.npz")
    np.savez_compressed(
        npz_path,
        train_h=np.stack([i.h for i in ds.train.instances]),
        val_h=np.stack([i.h for i in ds.val.instances]),
        test_h=np.stack([i.h for i in ds.test.instances]),
    )
    manifest = {
        "channel_config": cfg.channel.to_dict(),
        "base_seed": seed,
        "counts": {"train": counts[0], "val": counts[1], "test": counts[2]},
        "splits": {
            "train": list(ds.train.seeds),
            "val": list(ds.val.seeds),
            "test": list(ds.test.seeds),
        },
        "arrays": os.path.basename(npz_path),
    }
    manifest_path = os.path.join(out, "dataset.json")
    _write_json(manifest_path, manifest)
    print(f"wrote {sum(counts)} instances to {npz_path} with manifest {manifest_path}")
    return 0


def _cmd_train(args, cfg, seed, out) -> int:
    from dataclasses import replace

    from .training import make_dataset, train, write_curve_csv

    tcfg = replace(cfg.train, seed=seed)
    if args.model is not None:
        tcfg = replace(tcfg, model_kind=_NAME_TO_KIND[args.model])
    ds = make_dataset(cfg.channel, (tcfg.n_train, tcfg.n_val, tcfg.n_test), base_seed=seed)
    result = train(tcfg, ds)
    name = _KIND_TO_NAME[tcfg.model_kind]
    ckpt_path = os.path.join(out, f"{name}_checkpoint.json")
    result.save(ckpt_path)
    curve_path = os.path.join(out, f"{name}_curve.csv")
    write_curve_csv(result.curve, curve_path)
    print(
        f"trained {name} for {tcfg.epochs} epochs: best val rate "
        f"{result.best_val_rate:.4f} (initial {result.initial_val_rate:.4f})"
    )
    print(f"checkpoint {ckpt_path}")
    print(f"curve {curve_path}")
    return 0


def _cmd_eval(args, cfg, seed, out) -> int:
    from dataclasses import replace

    from .channel import ChannelConfig
    from .training import TrainConfig, evaluate, fresh_split, load_trained, make_dataset

    model, params, meta = load_trained(args.checkpoint)
    channel = ChannelConfig.from_dict(meta["channel_config"])
    if args.n is not None:
        if args.count < 1:
            raise ConfigError("--count must be >= 1")
        split = fresh_split(replace(channel, n=args.n), args.count, base_seed=1_000_000 + seed)
        label = f"fresh n={args.n}"
    else:
        tcfg = TrainConfig.from_dict(meta["train_config"])
        ds = make_dataset(channel, (tcfg.n_train, tcfg.n_val, tcfg.n_test), base_seed=tcfg.seed)
        split = getattr(ds, args.split)
        label = f"{args.split} split"
    report = evaluate(model, params, split, cfg.bench.wmmse_settings())
    report_path = os.path.join(out, "eval_report.json")
    _write_json(report_path, report.to_dict())
    print(
        f"eval on {label} ({report.count} instances, n={report.n}): "
        f"model mean rate {report.model_mean:.4f}, reference {report.wmmse_mean:.4f}, "
        f"ratio {report.ratio:.4f}"
    )
    print(f"report {report_path}")
    return 0


def _load_bench_checkpoints(args):
    from .training import load_trained

    checkpoints = {}
    base_channel = None
    for method in ("wugnn", "gnn"):
        path = getattr(args, method)
        if path is None:
            continue
        model, params, meta = load_trained(path)
        expected = _NAME_TO_KIND[method]
        if model.kind != expected:
            raise CheckpointError(
                f"checkpoint {path} holds a {model.kind} model, expected {expected}"
            )
        checkpoints[method] = (model, params)
        if base_channel is None:
            from .channel import ChannelConfig

            base_channel = ChannelConfig.from_dict(meta["channel_config"])
    return checkpoints, base_channel


def _cmd_bench(args, cfg, seed, out, threads) -> int:
    from .bench import emit_report, run_scalability, run_timing

    checkpoints, base_channel = _load_bench_checkpoints(args)
    if base_channel is None:
        base_channel = cfg.channel
    settings = cfg.bench.wmmse_settings()
    if args.experiment == "scalability":
        report = run_scalability(
            checkpoints,
            sizes=cfg.bench.sizes,
            trials_per_size=cfg.bench.trials_per_size,
            seed=seed,
            wmmse_settings=settings,
            base_channel=base_channel,
            threads=threads,
        )
        stem = "scalability"
    else:
        report = run_timing(
            checkpoints,
            sizes=cfg.bench.sizes,
            repetitions=cfg.bench.repetitions,
            warmup=cfg.bench.warmup,
            wmmse_settings=settings,
            seed=seed,
            base_channel=base_channel,
            threads=threads,
        )
        stem = "timing"
    csv_path = os.path.join(out, f"{stem}.csv")
    json_path = os.path.join(out, f"{stem}.json")
    emit_report(report, csv_path, format="csv")
    emit_report(report, json_path, format="json")
    if report.skipped:
        print(f"skipped methods: {', '.join(report.skipped)} (no checkpoint given)")
    for record in report.records:
        if stem == "scalability":
            print(
                f"n={record.n:4d} {record.method:6s} mean rate {record.mean_rate:.4f} "
                f"(std {record.std_rate:.4f}, {record.trials} trials)"
            )
        else:
            print(
                f"n={record.n:4d} {record.method:6s} median {record.median_s:.6f}s "
                f"(p10 {record.p10_s:.6f}, p90 {record.p90_s:.6f}, {record.reps} reps)"
            )
    print(f"reports {csv_path} {json_path}")
    return 0


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1

    threads = int(getattr(args, "threads", 1))
    if threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 1
    for var in _THREAD_VARS:
        os.environ[var] = str(threads)

    try:
        cfg = _load_run_config(args)
        seed = _effective_seed(args, cfg)
        out = _out_dir(args)
        if args.command == "generate":
            return _cmd_generate(args, cfg, seed, out)
        if args.command == "train":
            return _cmd_train(args, cfg, seed, out)
        if args.command == "eval":
            return _cmd_eval(args, cfg, seed, out)
        return _cmd_bench(args, cfg, seed, out, threads)
    except (ConfigError, CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure, not a usage problem
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
