"""Command-line entry point: datagen, train, eval, analyze, verify, params.

Exit codes: 0 success, 1 usage error, 2 runtime failure (including a failed
verification check).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

import numpy as np

from .config import ConfigError, TrainConfig, load_config
from .graph import LoadError, SnapshotSequence, load_snapshots

EFFECTIVE_CONFIG = "effective_config.txt"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kw):
        kw.setdefault("allow_abbrev", False)
        super().__init__(*args, **kw)

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _overrides(extra: list[str]) -> dict[str, str]:
    """``--key value`` and ``--key=value`` pairs left over by argparse."""
    pairs, i = {}, 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or len(tok) == 2:
            raise UsageError(f"unexpected argument {tok!r}")
        if "=" in tok:
            key, value = tok[2:].split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise UsageError(f"override {tok} needs a value")
            key, value = tok[2:], extra[i + 1]
            i += 2
        pairs[key] = value
    return pairs


def _write(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


def _load(args) -> SnapshotSequence:
    seq = load_snapshots(args.data, directed=args.directed)
    return seq.last_only() if args.static else seq


def _train_config(args, extra) -> TrainConfig:
    overrides = _overrides(extra)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    return load_config(args.config, overrides)


# ----------------------------------------------------------------------------
# subcommands


def cmd_datagen(args, extra) -> int:
    from .datagen import GenConfig, write_dataset

    if extra:
        raise UsageError(f"unexpected arguments {extra}")
    kw = {f.name: getattr(args, f.name) for f in dataclasses.fields(GenConfig)
          if getattr(args, f.name, None) is not None}
    try:
        cfg = GenConfig(**kw)
    except ValueError as e:
        raise UsageError(str(e)) from None
    write_dataset(cfg, args.out)
    dump = "".join(f"{k} = {v}\n" for k, v in dataclasses.asdict(cfg).items())
    _write(os.path.join(args.out, EFFECTIVE_CONFIG), dump)
    print(f"wrote dataset to {args.out}")
    return 0


def cmd_train(args, extra) -> int:
    from .metrics import macro_f1, micro_f1
    from .training import predict, train

    cfg = _train_config(args, extra)
    seq = _load(args)
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, EFFECTIVE_CONFIG), cfg.dump())
    res = train(seq, cfg, args.out)
    model = res.checkpoint.build_model()
    print(f"best_epoch\t{res.report.best_epoch}")
    print(f"best_val_macro_f1\t{res.checkpoint.best_val_macro_f1:.6f}")
    test = res.splits["test"]
    if len(test):
        pred = predict(model, seq, test)
        truth = seq.labels[test]
        print(f"test_micro_f1\t{micro_f1(truth, pred):.6f}")
        print(f"test_macro_f1\t{macro_f1(truth, pred):.6f}")
    return 0


def _checkpoint(args):
    from .training import Checkpoint

    path = args.checkpoint
    if os.path.isdir(path):
        path = os.path.join(path, "checkpoint.bin")
    return Checkpoint.load(path)


def cmd_eval(args, extra) -> int:
    from .metrics import macro_f1, micro_f1
    from .training import predict, resolve_splits

    if extra:
        raise UsageError(f"unexpected arguments {extra}")
    ckpt = _checkpoint(args)
    seq = _load(args)
    model = ckpt.build_model()
    nodes = resolve_splits(seq, model.cfg)[args.split]
    if not len(nodes):
        raise UsageError(f"split {args.split!r} has no labelled nodes")
    pred = predict(model, seq, nodes, args.batch_size)
    truth = seq.labels[nodes]
    mic, mac = micro_f1(truth, pred), macro_f1(truth, pred)
    print(f"{args.split}_micro_f1\t{mic:.6f}")
    print(f"{args.split}_macro_f1\t{mac:.6f}")
    if args.out:
        _write(os.path.join(args.out, EFFECTIVE_CONFIG), model.cfg.dump())
        _write(os.path.join(args.out, "eval.tsv"),
               f"split\tmicro_f1\tmacro_f1\tnodes\n{args.split}\t{mic!r}\t{mac!r}\t{len(nodes)}\n")
        _write(os.path.join(args.out, "predictions.tsv"),
               "node\tlabel\tpredicted\n"
               + "".join(f"{v}\t{y}\t{p}\n" for v, y, p in zip(nodes, truth, pred)))
    return 0


def cmd_analyze(args, extra) -> int:
    from . import analysis as an
    from .model import FixedSampler, forward_encoder
    from .training import resolve_splits

    if extra:
        raise UsageError(f"unexpected arguments {extra}")
    ckpt = _checkpoint(args)
    seq = _load(args)
    model = ckpt.build_model()
    nodes = resolve_splits(seq, model.cfg)[args.split]
    enc = forward_encoder(model.bind(None), seq, nodes, training=False,
                          sampler=FixedSampler(model.cfg.seed))
    fire = an.firing_stats(enc.spike_log.spikes)
    hists = an.membrane_histogram(enc.spike_log.membrane, args.bins)
    imp = an.temporal_importance(enc.attn)
    _write(os.path.join(args.out, EFFECTIVE_CONFIG), model.cfg.dump())
    _write(os.path.join(args.out, "firing.tsv"), an.firing_table(fire))
    _write(os.path.join(args.out, "membrane.tsv"), an.membrane_table(hists))
    _write(os.path.join(args.out, "membrane_hist.tsv"), an.histogram_table(hists))
    _write(os.path.join(args.out, "importance.tsv"), an.importance_table(imp))
    _write(os.path.join(args.out, "raster.tsv"), an.raster_table(enc.spike_log.spikes))
    for f in fire:
        print(f"layer{f.layer + 1}\trate={f.mean_rate:.4f}\tsilence={f.silence_ratio:.4f}")
    print("importance\t" + " ".join(f"{v:.4f}" for v in imp))
    return 0


def cmd_verify(args, extra) -> int:
    from .stability import run_suite

    if extra:
        raise UsageError(f"unexpected arguments {extra}")
    records = run_suite(args.seed or 0, quick=args.grid == "quick")
    lines = [line for _, _, line in records]
    for line in lines:
        print(line)
    failed = [name for name, ok, _ in records if not ok]
    summary = f"verify\t{'PASS' if not failed else 'FAIL'}\tchecks={len(records)}\tfailed={len(failed)}"
    print(summary)
    if args.out:
        _write(os.path.join(args.out, "verify.tsv"), "\n".join(lines + [summary]) + "\n")
    return 0 if not failed else 2


def cmd_params(args, extra) -> int:
    from .model import ChronoSpike, count_parameters

    overrides = _overrides(extra)
    if args.hidden:
        overrides["hidden"] = ",".join(map(str, args.hidden))
        overrides.setdefault("fanouts", ",".join(["5"] + ["2"] * (len(args.hidden) - 1)))
    if args.heads:
        overrides["heads"] = str(args.heads)
    cfg = load_config(args.config, overrides)
    model = ChronoSpike(cfg, args.d_in, args.classes, np.random.default_rng(cfg.seed))
    report = count_parameters(model)
    for line in report.lines():
        print(line)
    return 0


# ----------------------------------------------------------------------------
# parser


def build_parser() -> _Parser:
    p = _Parser(prog="chronospike", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("datagen", help="write a synthetic planted-signal dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--nodes", dest="num_nodes", type=int)
    g.add_argument("--steps", dest="num_steps", type=int)
    g.add_argument("--classes", dest="num_classes", type=int)
    g.add_argument("--p-intra", dest="p_intra", type=float)
    g.add_argument("--p-inter", dest="p_inter", type=float)
    g.add_argument("--switch-step", dest="switch_step", type=int)
    g.add_argument("--noise", dest="feature_noise", type=float)
    g.add_argument("--migrate", dest="migrate_fraction", type=float)
    g.add_argument("--block-width", dest="block_width", type=int)
    g.set_defaults(func=cmd_datagen)

    def data_args(sp):
        sp.add_argument("--data", required=True, help="dataset directory")
        sp.add_argument("--static", action="store_true", help="use the last snapshot only")
        sp.add_argument("--directed", action="store_true", help="keep edge direction")

    t = sub.add_parser("train", help="train a model; extra --key value pairs override the config")
    data_args(t)
    t.add_argument("--out", required=True)
    t.add_argument("--config")
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a split")
    data_args(e)
    e.add_argument("--checkpoint", required=True, help="checkpoint file or run directory")
    e.add_argument("--split", default="test", choices=("train", "val", "test"))
    e.add_argument("--batch-size", type=int)
    e.add_argument("--out")
    e.add_argument("--seed", type=int, help="accepted for symmetry; evaluation is deterministic")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("analyze", help="spike, membrane and attention statistics")
    data_args(a)
    a.add_argument("--checkpoint", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--split", default="test", choices=("train", "val", "test"))
    a.add_argument("--bins", type=int, default=50)
    a.add_argument("--seed", type=int, help="accepted for symmetry; analysis is deterministic")
    a.set_defaults(func=cmd_analyze)

    v = sub.add_parser("verify", help="run the stability and expressiveness checks")
    v.add_argument("--grid", default="default", choices=("default", "quick"))
    v.add_argument("--seed", type=int)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    q = sub.add_parser("params", help="exact and formula parameter counts")
    q.add_argument("--hidden", type=_int_list)
    q.add_argument("--heads", type=int)
    q.add_argument("--d-in", dest="d_in", type=int, default=128)
    q.add_argument("--classes", type=int, default=2)
    q.add_argument("--config")
    q.set_defaults(func=cmd_params)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args, extra = parser.parse_known_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().strip())
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args, extra)
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        print(parser.format_usage(), file=sys.stderr, end="")
        return 1
    except (LoadError, OSError, ValueError, RuntimeError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
