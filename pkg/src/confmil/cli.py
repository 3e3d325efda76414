"""Command-line entry point: gen, train, eval, baseline, gradcheck, report."""

from __future__ import annotations

import argparse
import datetime as _dt
import os
import shlex
import sys
from pathlib import Path

import numpy as np

from . import __version__, bipygen, milnet, trainer
from .errors import (
    CompatibilityError,
    ConfmilError,
    DataIntegrityError,
    GenerationError,
    NumericError,
)
from .evalsuite import (
    RFConfig,
    classification_report,
    lowest_energy_baseline,
    retrieval_report,
    rf_predict,
    rf_train,
)
from .evalsuite.report import AttentionRow, format_attention, parse_attention, write_report
from .molkit import ecfp, motif_dihedral

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_COMPAT, EXIT_CHECK = 0, 2, 3, 4, 5
GRADCHECK_TOL = 1e-4


class UsageError(ConfmilError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="confmil", description="Conformer-ensemble multiple-instance learning.")
    p.add_argument("--version", action="version", version=f"confmil {__version__}")
    p.add_argument("--no-timestamp", action="store_true", help="omit the timestamp from output headers")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate the synthetic bipyridine dataset")
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--n", type=_positive, default=1157)
    g.add_argument("--out", required=True)
    g.add_argument("--stats", help="write summary statistics here")

    t = sub.add_parser("train", help="train the attention MIL model")
    t.add_argument("--dataset", required=True)
    t.add_argument("--train-size", type=_positive, default=500)
    t.add_argument("--epochs", type=_positive, default=200)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--lr-final", type=float, help="decay the learning rate linearly to this value")
    t.add_argument("--batch", type=_positive, default=8)
    t.add_argument("--patience", type=int, default=20)
    t.add_argument("--seed", type=int, default=0, help="initialisation and batch order")
    t.add_argument("--split-seed", type=int, default=0)
    t.add_argument("--model-out", required=True)
    t.add_argument("--log-out", required=True)

    e = sub.add_parser("eval", help="classification and retrieval metrics of a trained model")
    e.add_argument("--model", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--split", choices=("test", "validation", "train"), default="test")
    e.add_argument("--split-seed", type=int, help="defaults to the seed stored in the checkpoint")
    e.add_argument("--metrics-out", required=True)
    e.add_argument("--attention-out")

    b = sub.add_parser("baseline", help="fingerprint forest or lowest-energy pose")
    b.add_argument("kind", choices=("rf", "lowest-energy"))
    b.add_argument("--dataset", required=True)
    b.add_argument("--split", choices=("test", "validation", "train"), default="test")
    b.add_argument("--split-seed", type=int, default=0)
    b.add_argument("--train-size", type=_positive, default=500)
    b.add_argument("--trees", type=_positive, default=100)
    b.add_argument("--bits", type=_positive, default=128)
    b.add_argument("--radius", type=int, default=2)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--metrics-out", required=True)

    c = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--bags", type=_positive, default=10)
    c.add_argument("--param-seeds", type=_positive, help="defaults to --bags")
    c.add_argument("--corrupt-grad", action="store_true", help=argparse.SUPPRESS)

    r = sub.add_parser("report", help="per-bag attention plots and a summary table")
    r.add_argument("--attention-csv", required=True)
    r.add_argument("--out-dir", required=True)
    return p


# ------------------------------------------------------------------ helpers

class Run:
    def __init__(self, args, argv):
        self.args = args
        self.command_line = shlex.join(["confmil", *argv])

    def header(self, **seeds) -> list:
        lines = [f"tool=confmil {__version__}", f"command={self.command_line}"]
        lines += [f"{k}={v}" for k, v in seeds.items()]
        if not self.args.no_timestamp:
            lines.append("timestamp=" + _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"))
        return lines

    def header_dict(self, **seeds) -> dict:
        return dict(line.split("=", 1) for line in self.header(**seeds))


def _need_input(path):
    if not Path(path).is_file():
        raise FileNotFoundError(f"no such file: {path}")


def _need_output(path):
    parent = Path(path).resolve().parent
    if not parent.is_dir() or not os.access(parent, os.W_OK):
        raise PermissionError(f"cannot write {path}: directory missing or read-only")


def _write_text(path, header, body: str):
    text = "".join(f"# {line}\n" for line in header) + body
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def _load_dataset(path):
    _need_input(path)
    return bipygen.read_dataset(path)[1]


def _split_indices(bags, split_seed, train_size, part):
    n_train = trainer.split_sizes(len(bags))[0]
    spec = trainer.split_dataset(bags, split_seed, min(train_size, n_train))
    return spec, list(spec.part(part))


# ------------------------------------------------------------------ commands

def cmd_gen(run: Run) -> int:
    a = run.args
    _need_output(a.out)
    if a.stats:
        _need_output(a.stats)
    config = bipygen.GeneratorConfig(seed=a.seed, n_molecules=a.n)
    bags, stats = bipygen.generate_dataset(config)
    header = run.header_dict(seed=a.seed)
    header["generator"] = config.to_dict()
    bipygen.write_dataset(a.out, bags, header)
    if a.stats:
        _write_text(a.stats, run.header(seed=a.seed), "\n".join(stats.lines()) + "\n")
    print(f"wrote {len(bags)} bags ({stats.n_positive} positive) to {a.out}")
    return EXIT_OK


def cmd_train(run: Run) -> int:
    a = run.args
    _need_input(a.dataset)
    _need_output(a.model_out)
    _need_output(a.log_out)
    config = trainer.TrainConfig(epochs=a.epochs, lr=a.lr, lr_final=a.lr_final, batch_size=a.batch,
                                 patience=a.patience, seed=a.seed)
    bags = _load_dataset(a.dataset)
    split = trainer.split_dataset(bags, a.split_seed, a.train_size)
    params, log = trainer.train(bags, split, config)
    seeds = dict(seed=a.seed, split_seed=a.split_seed)
    info = run.header_dict(**seeds)
    info.update(split_seed=a.split_seed, train_size=a.train_size, best_epoch=log.best_epoch)
    milnet.save_model(params, a.model_out, info)
    _write_text(a.log_out, run.header(**seeds), log.to_csv())
    print(f"best validation loss {log.best_val_loss:.6f} at epoch {log.best_epoch}")
    return EXIT_OK


def cmd_eval(run: Run) -> int:
    a = run.args
    _need_input(a.model)
    _need_input(a.dataset)
    _need_output(a.metrics_out)
    if a.attention_out:
        _need_output(a.attention_out)
    params, info = milnet.load_model(a.model, with_info=True)
    bags = _load_dataset(a.dataset)
    split_seed = a.split_seed if a.split_seed is not None else int(info.get("split_seed", 0))
    _, idx = _split_indices(bags, split_seed, int(info.get("train_size", 500)), a.split)
    packed = [milnet.featurize_bag(bags[i]) for i in idx]
    if packed and packed[0].x.shape[1] != params["embed.W"].shape[1]:
        raise CompatibilityError("checkpoint node features do not match the dataset featurization")
    outs = [milnet.predict_packed(p, params)[0] for p in packed]
    labels = np.array([bags[i].bag_label for i in idx])
    probs = np.array([o.prob for o in outs])
    pos = [k for k in range(len(idx)) if labels[k] == 1]
    lines = classification_report(labels, probs).lines()
    lines += retrieval_report([bags[idx[k]] for k in pos], [outs[k].alpha for k in pos]).lines()
    _write_text(a.metrics_out, run.header(split_seed=split_seed), "\n".join(lines) + "\n")
    if a.attention_out:
        rows = []
        for k, i in enumerate(idx):
            bag = bags[i]
            for j, conf in enumerate(bag.conformers):
                rows.append(AttentionRow(bag.id, j, motif_dihedral(conf, bag.graph), conf.energy,
                                         float(outs[k].alpha[j]), conf.instance_label, bag.bag_label,
                                         outs[k].prob))
        _write_text(a.attention_out, run.header(split_seed=split_seed), format_attention(rows))
    print("\n".join(lines))
    return EXIT_OK


def cmd_baseline(run: Run) -> int:
    a = run.args
    _need_input(a.dataset)
    _need_output(a.metrics_out)
    bags = _load_dataset(a.dataset)
    spec, idx = _split_indices(bags, a.split_seed, a.train_size, a.split)
    if a.kind == "rf":
        train_idx = list(spec.subset)
        fps = np.array([ecfp(b.graph, a.radius, a.bits) for b in bags])
        labels = np.array([b.bag_label for b in bags])
        forest = rf_train(fps[train_idx], labels[train_idx], RFConfig(trees=a.trees, seed=a.seed))
        lines = classification_report(labels[idx], rf_predict(forest, fps[idx])).lines()
        seeds = dict(seed=a.seed, split_seed=a.split_seed)
    else:
        positives = [bags[i] for i in idx if bags[i].bag_label == 1]
        lines = lowest_energy_baseline(positives).lines()
        seeds = dict(split_seed=a.split_seed)
    _write_text(a.metrics_out, run.header(**seeds), "\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


def cmd_gradcheck(run: Run) -> int:
    a = run.args
    errors = milnet.gradcheck_suite(a.seed, a.bags, a.param_seeds or a.bags, corrupt=a.corrupt_grad)
    worst = max(errors)
    print(f"max relative error {worst:.3e} over {len(errors)} checks")
    return EXIT_OK if worst < GRADCHECK_TOL else EXIT_CHECK


def cmd_report(run: Run) -> int:
    a = run.args
    _need_input(a.attention_csv)
    rows = parse_attention(Path(a.attention_csv).read_text(encoding="utf-8"))
    n = write_report(rows, a.out_dir, run.header())
    print(f"wrote {n} plots to {a.out_dir}")
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "baseline": cmd_baseline,
            "gradcheck": cmd_gradcheck, "report": cmd_report}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](Run(args, argv))
    except UsageError as exc:
        print(f"confmil: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"confmil: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CompatibilityError as exc:
        print(f"confmil: incompatible input: {exc}", file=sys.stderr)
        return EXIT_COMPAT
    except (OSError, ConfmilError, GenerationError, DataIntegrityError) as exc:
        print(f"confmil: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
