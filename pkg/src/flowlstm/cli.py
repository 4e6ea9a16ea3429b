"""``flowlstm`` command line.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from contextlib import nullcontext

import numpy as np
from threadpoolctl import threadpool_limits

from . import bench, zoo
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .data import (
    FlowRegime,
    GenConfig,
    SignalFormatError,
    build_dataset,
    load_dataset,
    read_signal,
    save_dataset,
    pdf_export,
    write_pdf_export,
)
from .nn import predict_batch
from .optim import TrainConfig, TrainingError, train
from .tensor import make_rng

log = logging.getLogger("flowlstm")

GRAMMAR_HELP = (
    "architecture grammar: [n]LSTM-<H>H-<m>ReLU or (<body>)×<k>, "
    "e.g. LSTM-128H-2ReLU, 3LSTM-128H-2ReLU, (LSTM-128H-2ReLU)×2"
)


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from None


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="seed for every random choice (default 0)")
    p.add_argument("--config", metavar="FILE", help="JSON file of flag defaults; explicit flags win")
    p.add_argument("--threads", type=int, default=None, help="BLAS threads (default: all cores)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _add_data_flags(p: argparse.ArgumentParser, seg_default: float | None = 5.0) -> None:
    g = p.add_argument_group("synthetic data")
    g.add_argument("--conditions", type=int, default=40, help="test conditions per regime (default 40)")
    g.add_argument("--duration", type=float, default=60.0, help="seconds per condition (default 60)")
    g.add_argument("--sample-rate", type=float, default=100.0, help="Hz (default 100)")
    if seg_default is not None:
        g.add_argument("--seg", type=float, default=seg_default, help=f"segment length in s (default {seg_default:g})")
    g.add_argument("--split", type=float, default=0.8, help="train fraction of conditions (default 0.8)")
    g.add_argument("--regimes", metavar="FILE", help="JSON overrides for per-regime generator parameters")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training")
    g.add_argument("--max-epochs", type=int, default=100)
    g.add_argument("--batch-size", type=int, default=32)
    g.add_argument("--lr", type=float, default=0.01, help="initial learning rate")
    g.add_argument("--min-lr", type=float, default=1e-4)
    g.add_argument("--lr-factor", type=float, default=0.5, help="LR reduction factor")
    g.add_argument("--lr-patience", type=int, default=2, help="non-improving epochs per LR reduction")
    g.add_argument("--patience", type=int, default=3, help="non-improving epochs before early stop")
    g.add_argument("--clip", type=float, default=5.0, help="global gradient-norm clip")
    g.add_argument("--feature-dim", type=int, default=64, help="width of the input ReLU feature layer")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowlstm", description="Deep LSTM flow-regime classifier.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    parser.set_defaults(_commands=sub.choices)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    _add_common(p)
    _add_data_flags(p)
    p.add_argument("--reverse", action="store_true", help="add time-reversed copies of every segment")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="train a network on a dataset directory")
    _add_common(p)
    _add_train_flags(p)
    p.add_argument("--arch", required=True, help=GRAMMAR_HELP)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", default="model.ckpt.json", help="checkpoint path")

    p = sub.add_parser("eval", help="accuracy and confusion matrix of a checkpoint")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "test", "all"), default="test")

    p = sub.add_parser("predict", help="classify one signal file")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--signal", required=True)

    p = sub.add_parser("inspect", help="export PDF/CPDF of a signal file")
    _add_common(p)
    p.add_argument("--signal", required=True)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--out", help="CSV path (default: standard output)")

    p = sub.add_parser("bench-seqlen", help="sequence-length sensitivity study")
    _add_common(p)
    _add_data_flags(p, seg_default=None)
    _add_train_flags(p)
    p.add_argument("--lengths", type=_floats, default=[20.0, 10.0, 5.0, 3.0], help="comma list of seconds")
    p.add_argument("--arch", default=zoo.BASELINE, help=GRAMMAR_HELP)
    p.add_argument("--no-reverse", action="store_true", help="skip the reversal augmentation")
    p.add_argument("--repeats", type=int, default=5, help="timed inference repetitions")
    p.add_argument("--seeds", type=int, default=1, help="repeat the study for seeds seed..seed+N-1")
    p.add_argument("--out", default="seqlen", help="report file stem")

    p = sub.add_parser("bench-arch", help="architecture accuracy / latency comparison")
    _add_common(p)
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--archs", default=",".join(zoo.STANDARD_ARCHS), help="comma list of descriptors")
    p.add_argument("--hidden-scale", type=float, default=1.0, help="multiply every H (desk-scale runs)")
    p.add_argument("--no-reverse", action="store_true", help="skip the reversal augmentation")
    p.add_argument("--repeats", type=int, default=5, help="timed inference repetitions")
    p.add_argument("--seeds", type=int, default=1, help="repeat the study for seeds seed..seed+N-1")
    p.add_argument("--out", default="arch", help="report file stem")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse twice: once to find the subcommand and --config, once with file defaults."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        parser.exit(2, f"flowlstm: error: cannot read config {args.config}: {exc}\n")
    if not isinstance(cfg, dict):
        parser.exit(2, f"flowlstm: error: config {args.config} must hold a JSON object\n")
    subparser = args._commands[args.command]
    known = {a.dest for a in subparser._actions}
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    unknown = sorted(set(cfg) - known - {"config", "help"})
    if unknown:
        parser.exit(2, f"flowlstm: error: unknown keys in {args.config}: {', '.join(unknown)}\n")
    if "lengths" in cfg and isinstance(cfg["lengths"], str):
        cfg["lengths"] = _floats(cfg["lengths"])
    subparser.set_defaults(**cfg)
    return parser.parse_args(argv)


def _gen_config(args) -> GenConfig:
    d = {"sample_rate": args.sample_rate, "duration": args.duration, "seed": args.seed}
    if getattr(args, "regimes", None):
        try:
            with open(args.regimes) as fh:
                d["regimes"] = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read regime parameters: {exc}") from None
    try:
        return GenConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad generator configuration: {exc}") from None


def _train_config(args) -> TrainConfig:
    try:
        return TrainConfig(
            initial_lr=args.lr, min_lr=args.min_lr, lr_reduce_factor=args.lr_factor,
            lr_patience=args.lr_patience, early_stop_patience=args.patience,
            max_epochs=args.max_epochs, batch_size=args.batch_size, seed=args.seed,
            clip_norm=args.clip,
        )
    except ValueError as exc:
        raise UsageError(f"bad training configuration: {exc}") from None


def _arch(text: str, **dims) -> zoo.ArchSpec:
    try:
        return zoo.parse_arch(text, **dims)
    except zoo.ArchError as exc:
        raise UsageError(f"{exc}\n{GRAMMAR_HELP}") from None


def _data_config(args, reverse: bool) -> bench.DataConfig:
    if args.conditions < 1:
        raise UsageError("--conditions must be >= 1")
    if not 0 < args.split < 1:
        raise UsageError("--split must be in (0, 1)")
    return bench.DataConfig(_gen_config(args), args.conditions, getattr(args, "seg", 5.0), reverse, args.split)


def cmd_generate(args) -> int:
    gen = _gen_config(args)
    if args.seg <= 0 or args.seg > gen.duration:
        raise UsageError(f"--seg must be in (0, duration={gen.duration:g}]")
    if args.seg * gen.sample_rate < 1:
        raise UsageError("--seg is shorter than one sample")
    try:
        ds = build_dataset(gen, args.conditions, args.seg, args.reverse, args.split)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    path = save_dataset(ds, args.out)
    print(f"wrote {len(ds)} items ({len(ds.conditions)} conditions) to {path}")
    train_counts, test_counts = ds.counts("train"), ds.counts("test")
    print(f"{'regime':<16}{'train':>7}{'test':>7}")
    for r in FlowRegime:
        print(f"{r.name:<16}{train_counts[r]:>7}{test_counts[r]:>7}")
    print(f"fingerprint {ds.fingerprint()}")
    return 0


def cmd_train(args) -> int:
    arch = _arch(args.arch, feature_dim=args.feature_dim)
    cfg = _train_config(args)
    ds = load_dataset(args.data)
    net = zoo.build(arch, make_rng(args.seed))
    log.info("training %s (%d parameters) on %d items", arch.descriptor, net.parameter_count(), len(ds))
    net, report = train(net, ds, cfg)
    ckpt = Checkpoint(net, arch, args.seed, ds.window, ds.sample_rate, ds.fingerprint(), report.summary())
    save_checkpoint(args.out, ckpt)
    if report.epochs:
        print(report.table())
    else:
        print("max_epochs = 0: saved the initialised network")
    print(f"checkpoint: {args.out} ({arch.descriptor})")
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.model)
    ds = load_dataset(args.data)
    x, y = ds.arrays(None if args.split == "all" else args.split)
    if len(y) == 0:
        raise RuntimeError(f"split {args.split!r} is empty")
    if ckpt.window is not None and x.shape[1] != ckpt.window:
        raise RuntimeError(f"dataset segments have {x.shape[1]} samples, model expects {ckpt.window}")
    pred = np.argmax(predict_batch(ckpt.net, x), axis=1)
    print(f"{ckpt.arch.descriptor}: {args.split} accuracy {100.0 * np.mean(pred == y):.2f}% on {len(y)} items")
    names = [r.name for r in FlowRegime]
    conf = np.zeros((len(names), len(names)), dtype=int)
    np.add.at(conf, (y, pred), 1)
    print("confusion (rows true, columns predicted):")
    print(" " * 16 + "".join(f"{n[:8]:>9}" for n in names))
    for k, n in enumerate(names):
        print(f"{n:<16}" + "".join(f"{v:>9}" for v in conf[k]))
    return 0


def cmd_predict(args) -> int:
    ckpt = load_checkpoint(args.model)
    sig = read_signal(args.signal)
    if ckpt.sample_rate is not None and sig.sample_rate != ckpt.sample_rate:
        raise RuntimeError(f"signal is sampled at {sig.sample_rate:g} Hz, model expects {ckpt.sample_rate:g} Hz")
    window = ckpt.window or len(sig)
    if len(sig) < window:
        raise RuntimeError(f"signal has {len(sig)} samples; the model needs at least {window}")
    n = len(sig) // window
    windows = sig.samples[: n * window].reshape(n, window)
    probs = predict_batch(ckpt.net, windows)
    votes = Counter(np.argmax(probs, axis=1).tolist())
    # majority vote; ties go to the lowest class index
    label = FlowRegime(min(votes, key=lambda c: (-votes[c], c)))
    mean = probs.mean(axis=0)
    print(f"regime: {label.name}")
    print(f"code: {int(label)}")
    print("probabilities: " + " ".join(f"{r.name}={mean[int(r)]:.4f}" for r in FlowRegime))
    print(f"windows: {n} of {window} samples; votes: "
          + " ".join(f"{FlowRegime(c).name}={v}" for c, v in sorted(votes.items())))
    return 0


def cmd_inspect(args) -> int:
    if args.bins < 2:
        raise UsageError("--bins must be >= 2")
    sig = read_signal(args.signal)
    if args.out:
        write_pdf_export(sig, args.bins, args.out)
        print(f"wrote {args.bins} bins to {args.out}")
    else:
        sys.stdout.write(pdf_export(sig, args.bins))
    return 0


def _bench_seeds(args):
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    for k in range(args.seeds):
        seed = args.seed + k
        stem = args.out if args.seeds == 1 else f"{args.out}_seed{seed}"
        yield seed, stem


def cmd_bench_seqlen(args) -> int:
    arch = _arch(args.arch, feature_dim=args.feature_dim)
    if not args.lengths or min(args.lengths) <= 0:
        raise UsageError("--lengths must be positive")
    if max(args.lengths) > args.duration:
        raise UsageError(f"every length must be <= --duration ({args.duration:g} s)")
    data, cfg = _data_config(args, not args.no_reverse), _train_config(args)
    for seed, stem in _bench_seeds(args):
        d, c = bench.with_seed(data, cfg, seed)
        report = bench.sensitivity_study(args.lengths, arch, d, c, args.repeats)
        paths = bench.emit_report(report, stem)
        sys.stdout.write(bench.format_table(report))
        print(f"wrote {paths[0]} and {paths[1]}")
    return 0


def cmd_bench_arch(args) -> int:
    descriptors = [d.strip() for d in args.archs.split(",") if d.strip()]
    for d in descriptors:
        _arch(d)
    if args.hidden_scale <= 0:
        raise UsageError("--hidden-scale must be positive")
    data, cfg = _data_config(args, not args.no_reverse), _train_config(args)
    for seed, stem in _bench_seeds(args):
        d, c = bench.with_seed(data, cfg, seed)
        try:
            report = bench.architecture_study(descriptors, d, c, args.repeats, args.hidden_scale,
                                              feature_dim=args.feature_dim)
        except ValueError as exc:
            if "baseline" in str(exc):
                raise UsageError(str(exc)) from None
            raise
        paths = bench.emit_report(report, stem)
        sys.stdout.write(bench.format_table(report))
        print(f"wrote {paths[0]} and {paths[1]}")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "inspect": cmd_inspect,
    "bench-seqlen": cmd_bench_seqlen,
    "bench-arch": cmd_bench_arch,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = _apply_config(parser, sys.argv[1:] if argv is None else list(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None and args.threads < 1:
        parser.exit(2, "flowlstm: error: --threads must be >= 1\n")
    limits = threadpool_limits(limits=args.threads) if args.threads else nullcontext()
    try:
        with limits:
            return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"flowlstm {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except SignalFormatError as exc:
        print(f"flowlstm {args.command}: malformed signal file: {exc}", file=sys.stderr)
        return 1
    except TrainingError as exc:
        print(f"flowlstm {args.command}: training failed: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError, CheckpointError) as exc:
        print(f"flowlstm {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
