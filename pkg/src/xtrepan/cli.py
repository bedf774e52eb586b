"""Command-line entry point: ``xtrepan {train,extract,induce,evaluate,compare}``.

Exit codes: 0 success, 1 invalid input or flags, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

from .c45 import C45Params, induce_c45
from .dataset import BinningSpec, Dataset, SplitSpec, bin_target, read_dataset, split_dataset
from .errors import ValidationError, XTrepanError
from .metrics import Report, compare_report, evaluate_tree
from .network import load_network, save_network
from .trainer import CROSS_ENTROPY, MEAN_SQUARE_ERROR, Topology, TrainConfig, train
from .tree import deserialize, serialize, to_dot
from .trepan import DISJUNCTIVE, MOFN, SINGLE_TEST, TrepanParams, audit_to_csv, extract_tree

VARIANT_FLAGS = {"mofn": MOFN, "single": SINGLE_TEST, "disjunctive": DISJUNCTIVE}
LOSS_FLAGS = {"cross_entropy": CROSS_ENTROPY, "mse": MEAN_SQUARE_ERROR,
              "mean_square_error": MEAN_SQUARE_ERROR}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p, data=True, out=True, split=True):
    if data:
        p.add_argument("--data", required=True, help="CSV data file")
        p.add_argument("--schema", required=True, help="schema file for --data")
    if out:
        p.add_argument("--out", required=True, help="output directory")
    if split:
        p.add_argument("--split", help="train,cv,test fractions, e.g. 0.6,0.2,0.2 (seeded by --seed)")
    p.add_argument("--bins", help="bin a continuous target: 'e1,e2,...:L1,L2,...'")
    p.add_argument("--seed", type=int, default=0, help="seed for every random choice (default 0)")
    p.add_argument("--config", help="JSON file of flag defaults; explicit flags win")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="xtrepan", description="Extract, induce and compare decision trees.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a network with early stopping")
    _common(p)
    p.add_argument("--hidden", default="4:hyperbolic", help="hidden layers SIZE:ACT[,SIZE:ACT...]")
    p.add_argument("--output-activation", default=None,
                   help="output activation (default: logistic/softmax for classes, identity for regression)")
    p.add_argument("--skips", default="", help="skip connections FROM-TO[,FROM-TO...] (layer 0 = input)")
    p.add_argument("--loss", choices=sorted(LOSS_FLAGS), default="mse")
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--patience", type=int, default=50)

    p = sub.add_parser("extract", help="extract a tree from a network")
    _common(p)
    p.add_argument("--network", required=True)
    p.add_argument("--variant", choices=sorted(VARIANT_FLAGS), default="mofn")
    p.add_argument("--min-sample", type=int, default=1000)
    p.add_argument("--max-nodes", type=int, default=50)
    p.add_argument("--beam-width", type=int, default=2)
    p.add_argument("--purity", type=float, default=0.99, help="leaf purity that stops expansion")

    p = sub.add_parser("induce", help="induce a C4.5-style tree from data")
    _common(p)
    p.add_argument("--criterion", choices=["gain", "ratio"], default="ratio")
    p.add_argument("--min-leaf", type=int, default=2)
    p.add_argument("--max-depth", type=int, default=None)

    p = sub.add_parser("evaluate", help="metrics for one tree")
    _common(p)
    p.add_argument("--tree", required=True)
    p.add_argument("--network", default=None, help="network for fidelity (optional)")

    p = sub.add_parser("compare", help="comparison report for several trees")
    _common(p)
    p.add_argument("--tree", required=True, action="append", help="tree file (repeatable)")
    p.add_argument("--network", default=None)
    return parser


# -- helpers ------------------------------------------------------------------------

def _read(path) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _write_atomic(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_data(args, network=None) -> Dataset:
    for path in (args.data, args.schema):
        if not os.path.exists(path) or os.path.isdir(path):
            raise UsageError(f"no such file: {path}")
    data = read_dataset(args.data, args.schema)
    if not data.schema.is_classification and args.command != "train":
        bins = BinningSpec.parse(args.bins) if args.bins else (network.binning if network else None)
        if bins is None:
            raise UsageError("continuous target: pass --bins to turn it into classes")
        data = bin_target(data, bins)
    return data


def _partitions(args, data):
    if not args.split:
        return data, data.replace(()), data
    return split_dataset(data, SplitSpec.parse(args.split, seed=args.seed))


def _network(path):
    return load_network(_read(path))


def _tree(path):
    return deserialize(_read(path))


# -- commands -------------------------------------------------------------------------

def cmd_train(args):
    data = _load_data(args)
    train_set, cv_set, _ = _partitions(args, data)
    classification = data.schema.is_classification
    out_act = args.output_activation
    if out_act is None:
        if not classification:
            out_act = "identity"
        else:
            out_act = "logistic" if len(data.schema.class_labels) == 2 else "softmax"
    topology = Topology.parse(args.hidden, out_act, args.skips)
    cfg = TrainConfig(topology, LOSS_FLAGS[args.loss], args.lr, args.epochs, args.patience, args.seed)
    bins = BinningSpec.parse(args.bins) if args.bins else None
    net, report = train(train_set, cv_set, cfg, binning=bins)
    out = Path(args.out)
    _write_atomic(out / "network.net", save_network(net))
    _write_atomic(out / "train_report.csv", report.to_csv())
    print(f"trained {report.stopping_epoch} epochs ({report.stop_reason}); "
          f"best epoch {report.best_epoch}; wrote {out / 'network.net'}")


def cmd_extract(args):
    net = _network(args.network)
    data = _load_data(args, net)
    train_set = _partitions(args, data)[0]
    params = TrepanParams(args.min_sample, args.max_nodes, args.beam_width,
                          VARIANT_FLAGS[args.variant], args.purity, args.seed)
    audit = []
    tree = extract_tree(net, train_set, params, audit)
    out = Path(args.out)
    _write_atomic(out / "extracted.tree", serialize(tree))
    _write_atomic(out / "extracted.dot", to_dot(tree))
    _write_atomic(out / "extract_audit.csv", audit_to_csv(audit))
    print(f"extracted tree written to {out / 'extracted.tree'}")


def cmd_induce(args):
    data = _load_data(args)
    train_set = _partitions(args, data)[0]
    params = C45Params(args.min_leaf, args.criterion == "ratio", args.max_depth)
    tree = induce_c45(train_set, params)
    out = Path(args.out)
    _write_atomic(out / "induced.tree", serialize(tree))
    _write_atomic(out / "induced.dot", to_dot(tree))
    print(f"induced tree written to {out / 'induced.tree'}")


def _eval_set(args):
    net = _network(args.network) if args.network else None
    data = _load_data(args, net)
    return net, _partitions(args, data)[2]


def cmd_evaluate(args):
    tree = _tree(args.tree)
    net, test = _eval_set(args)
    report = Report([(Path(args.tree).stem, evaluate_tree(tree, test, net))])
    _write_atomic(Path(args.out) / "metrics.csv", report.to_csv())
    sys.stdout.write(report.to_text())


def cmd_compare(args):
    trees = [(Path(t).stem, _tree(t)) for t in args.tree]
    net, test = _eval_set(args)
    report = compare_report(trees, net, test)
    out = Path(args.out)
    _write_atomic(out / "compare.csv", report.to_csv())
    _write_atomic(out / "compare.txt", report.to_text())
    sys.stdout.write(report.to_text())


COMMANDS = {"train": cmd_train, "extract": cmd_extract, "induce": cmd_induce,
            "evaluate": cmd_evaluate, "compare": cmd_compare}


def _apply_config(parser, argv):
    """Parse ``argv`` with defaults taken from ``--config``; explicit flags still win."""
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    if known.config and command:
        try:
            config = json.loads(_read(known.config))
        except json.JSONDecodeError as exc:
            raise UsageError(f"{known.config}: invalid JSON: {exc}") from None
        if not isinstance(config, dict):
            raise UsageError(f"{known.config}: expected a JSON object")
        sub = parser._subparsers._group_actions[0].choices[command]
        config = {k.replace("-", "_"): v for k, v in config.items()}
        unknown = sorted(set(config) - {a.dest for a in sub._actions} - {"help"})
        if unknown:
            raise UsageError(f"{known.config}: unknown keys {unknown}")
        for action in sub._actions:
            if action.dest in config:
                action.required = False
        sub.set_defaults(**config)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (XTrepanError, ArithmeticError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
