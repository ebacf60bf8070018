"""Command line entry point: ``setrank <subcommand> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.  Failures print a
single ``error: <Kind>: <message>`` line on stderr.  Every subcommand that
writes files also writes ``<output>.manifest.json`` recording the resolved
configuration and SHA-256 digests of its inputs and outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from importlib import resources
from pathlib import Path

from . import __version__
from . import data as data_io
from .bpr import train_bpr
from .exceptions import SetRankError
from .factors import TrainConfig, load_model, save_model
from .metrics import evaluate
from .theory import loglog_slope, recovery_dataset, scaling_sweep, summarize_sweep
from .trainer import bench_grad, train

logger = logging.getLogger("setrank")


def _int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("list must not be empty")
    return values


def _float_list(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("list must not be empty")
    return values


def toy_ratings_path():
    return resources.files("setrank").joinpath("toy_ratings.tsv")


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(target, subcommand, args, inputs, outputs, started):
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose")}
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "inputs": {str(p): sha256(p) for p in inputs},
        "outputs": {str(p): sha256(p) for p in outputs},
        "version": __version__,
        "wall_time_s": round(time.perf_counter() - started, 3),
    }
    path = Path(f"{target}.manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path


def _add_train_flags(p, defaults=TrainConfig()):
    p.add_argument("--r", type=int, default=defaults.rank, help="latent rank")
    p.add_argument("--lambda", dest="lam", type=float, default=defaults.lam, help="L2 regularization")
    p.add_argument("--lr", type=float, default=defaults.gamma, help="initial step size")
    p.add_argument("--decay", type=float, default=defaults.decay, help="per-epoch step decay")
    p.add_argument("--tau", type=float, default=defaults.tau, help="negatives per train positive")
    p.add_argument("--epochs", type=int, default=defaults.epochs)
    p.add_argument("--init-std", type=float, default=defaults.init_std)
    p.add_argument("--seed", type=int, default=defaults.seed)


def _config(args) -> TrainConfig:
    return TrainConfig(
        rank=args.r,
        lam=args.lam,
        gamma=args.lr,
        decay=args.decay,
        tau=args.tau,
        epochs=args.epochs,
        seed=args.seed,
        init_std=args.init_std,
    )


def _fit(ds, cfg, model_kind, threads=1, deterministic=True):
    if model_kind == "bpr":
        return train_bpr(ds, cfg)
    return train(ds, cfg, n_threads=threads, deterministic=deterministic)


# ---------------------------------------------------------------------------
# subcommands


def cmd_prepare(args):
    started = time.perf_counter()
    source = toy_ratings_path() if args.toy else args.input
    ds = data_io.binarize(data_io.read_ratings(source, args.delimiter), args.threshold)
    ds = data_io.filter_users(ds, args.min_pos)
    ds = data_io.split(ds, args.train_frac, args.cap, args.seed)
    data_io.save(ds, args.out)
    print(f"users\t{ds.n_users}\titems\t{ds.n_items}\tpositives\t{ds.n_positives}")
    inputs = [] if args.toy else [args.input]
    write_manifest(args.out, "prepare", args, inputs, [args.out], started)


def cmd_train(args):
    started = time.perf_counter()
    ds = data_io.load(args.data)
    cfg = _config(args)
    result = _fit(ds, cfg, args.model, args.threads, args.deterministic)
    save_model(result.model, args.out)
    outputs = [args.out]
    if args.log:
        Path(args.log).write_text(result.log_tsv())
        outputs.append(args.log)
    logger.info("best epoch %d", result.best_epoch)
    write_manifest(args.out, "train", args, [args.data], outputs, started)


def cmd_evaluate(args):
    started = time.perf_counter()
    ds = data_io.load(args.data)
    model = load_model(args.model, ds.n_users, ds.n_items)
    report = evaluate(model, ds, args.cutoffs, per_user=bool(args.per_user))
    text = report.to_json() if args.format == "json" else report.to_tsv()
    outputs = []
    if args.out:
        Path(args.out).write_text(text)
        outputs.append(args.out)
    else:
        sys.stdout.write(text)
    if args.per_user:
        Path(args.per_user).write_text(report.per_user_tsv())
        outputs.append(args.per_user)
    if outputs:
        write_manifest(outputs[0], "evaluate", args, [args.data, args.model], outputs, started)


def cmd_simulate(args):
    started = time.perf_counter()
    cfg = _config(args)
    sizes = args.sweep or [args.users]
    rows = scaling_sweep(
        args.items, sizes, args.rank, J=args.J, replicates=args.replicates,
        alpha=args.alpha, seed=args.seed, cfg=cfg, scale=args.scale,
    )
    lines = ["N\tM\tr\treplicate\tD"]
    lines += [f"{r['N']}\t{r['M']}\t{r['r']}\t{r['replicate']}\t{r['D']:.10g}" for r in rows]
    text = "\n".join(lines) + "\n"
    summary = summarize_sweep(rows)
    for s in summary:
        print(f"N={s['N']}\tmean_D={s['mean_D']:.6g}\tstd_D={s['std_D']:.3g}")
    if len(summary) > 1:
        print(f"loglog_slope\t{loglog_slope(summary):.4f}")
    if args.out:
        Path(args.out).write_text(text)
        write_manifest(args.out, "simulate", args, [], [args.out], started)
    else:
        sys.stdout.write(text)


def cmd_bench_grad(args):
    rep = bench_grad(args.J, args.tau, args.r, args.N, M=args.M, repeats=args.repeats, seed=args.seed)
    print(json.dumps(rep, indent=2))


def cmd_sweep(args):
    started = time.perf_counter()
    if args.data:
        ds = data_io.load(args.data)
        inputs = [args.data]
    else:
        ds, _ = recovery_dataset(seed=args.seed)
        inputs = []
    base = _config(args)
    lines = [f"{args.param}\tP@5"]
    for value in args.values:
        if args.param == "tau":
            cfg = base.replace(tau=value)
        else:
            cfg = base.replace(rank=int(value))
        result = _fit(ds, cfg, args.model)
        p5 = evaluate(result.model, ds, (5,)).precision[5]
        lines.append(f"{value:g}\t{p5:.6f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        write_manifest(args.out, "sweep", args, inputs, [args.out], started)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="setrank", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="binarize, filter and split a rating log")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="user<TAB>item<TAB>rating[<TAB>timestamp] file")
    src.add_argument("--toy", action="store_true", help="use the bundled toy rating log")
    p.add_argument("--delimiter", choices=["tab", "comma"], default="tab")
    p.add_argument("--threshold", type=float, default=3.0)
    p.add_argument("--min-pos", type=int, default=1)
    p.add_argument("--train-frac", type=float, default=0.5)
    p.add_argument("--cap", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train MF-SetRank or the BPR baseline")
    p.add_argument("--data", required=True)
    p.add_argument("--model", choices=["setrank", "bpr"], default="setrank")
    _add_train_flags(p)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="per-epoch TSV: epoch, objective, val_p5, gamma")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="P@K, R@K and MAP@K on the test split")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--cutoffs", type=_int_list, default=[5, 10])
    p.add_argument("--format", choices=["tsv", "json"], default="tsv")
    p.add_argument("--per-user")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="excess-risk scaling experiment on synthetic worlds")
    p.add_argument("--users", type=int, default=500)
    p.add_argument("--items", type=int, default=100)
    p.add_argument("--rank", type=int, default=5)
    p.add_argument("--J", type=int, default=5)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--scale", type=float, default=1.0, help="std of ground-truth scores")
    p.add_argument("--replicates", type=int, default=5)
    p.add_argument("--sweep", type=_int_list, help="comma-separated user counts")
    sim_defaults = TrainConfig(rank=5, lam=0.5, gamma=0.5, decay=0.99, tau=3, epochs=150, seed=0)
    _add_train_flags(p, sim_defaults)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench-grad", help="time naive vs fast gradients")
    p.add_argument("--J", type=int, default=100)
    p.add_argument("--tau", type=float, default=3.0)
    p.add_argument("--r", type=int, default=50)
    p.add_argument("--N", type=int, default=500)
    p.add_argument("--M", type=int)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench_grad)

    p = sub.add_parser("sweep", help="P@5 as tau or r varies")
    p.add_argument("--data", help="prepared dataset (synthetic recovery task if omitted)")
    p.add_argument("--model", choices=["setrank", "bpr"], default="setrank")
    p.add_argument("--param", choices=["tau", "r"], required=True)
    p.add_argument("--values", type=_float_list, required=True)
    _add_train_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except (SetRankError, OSError, ValueError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
