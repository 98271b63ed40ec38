"""Command-line entry point: ``lalparse <command> ...``.

Exit codes: 0 success, 1 input error, 2 training divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .constituency import BracketError, TreeError, to_bracketed
from .data import AlignmentError, load_treebank, read_trees, save_treebank, generate_toy_corpus
from .dependency import ConllError, format_conll
from .encoder import InputError, Sentence
from .metrics import VocabMismatchError, evaluate
from .tensor import ContractError, ShapeError
from .train import CheckpointError, TrainConfig, TrainingDiverged, load_checkpoint, train

log = logging.getLogger("lalparse")

INPUT_ERRORS = (
    AlignmentError,
    BracketError,
    CheckpointError,
    ConllError,
    ContractError,
    InputError,
    ShapeError,
    TreeError,
    VocabMismatchError,
    OSError,
    ValueError,
)


def read_tagged(lines, source: str = "<input>") -> list[Sentence]:
    """One sentence per line of whitespace-separated ``word/TAG`` tokens."""
    out = []
    for lineno, line in enumerate(lines, start=1):
        tokens = line.split()
        if not tokens:
            continue
        words, tags = [], []
        for tok in tokens:
            word, sep, tag = tok.rpartition("/")
            if not sep or not word or not tag:
                raise InputError(f"{source}:{lineno}: token {tok!r} is not word/TAG")
            words.append(word)
            tags.append(tag)
        out.append(Sentence(words, tags))
    return out


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_train(args) -> int:
    from .experiments import resolve_data

    config = TrainConfig.from_json(args.config)
    config.checkpoint = args.out
    tb, dev = resolve_data(config, args.trees, args.deps)
    if args.dev_trees:
        dev = load_treebank(args.dev_trees, args.dev_deps, vocab=tb.vocab)

    def on_epoch(epoch, loss, report):
        row = {"epoch": epoch, "loss": round(loss, 6)}
        if report is not None:
            row.update({k: round(v, 2) for k, v in report.row().items()})
        print(json.dumps(row), file=sys.stderr)

    result = train(tb, config, dev, on_epoch)
    report = evaluate(result.model, dev if dev is not None else tb, config.punct_tags)
    summary = {"checkpoint": args.out, "epochs": result.epochs_run, "seconds": round(result.seconds, 2), **report.row()}
    print(json.dumps(summary, indent=2))
    return 0


def cmd_parse(args) -> int:
    model = load_checkpoint(args.model)
    with open(args.input, encoding="utf-8") as fh:
        sentences = read_tagged(fh, args.input)
    chunks = []
    for s in sentences:
        tree, arcs = model.parse(s)
        if args.format == "brackets":
            chunks.append(to_bracketed(s.words, s.tags, tree) + "\n")
        else:
            chunks.append(format_conll(s.words, s.tags, arcs.heads, arcs.labels) + "\n")
    _emit("".join(chunks), args.out)
    return 0


def cmd_eval(args) -> int:
    model = load_checkpoint(args.model)
    tb = load_treebank(args.trees, args.deps, vocab=model.vocab)
    punct = args.punct.split(",") if args.punct else ["PUNCT"]
    report = evaluate(model, tb, punct)
    _emit(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", args.out)
    return 0


def cmd_inspect(args) -> int:
    from .interpret import inspect_treebank

    model = load_checkpoint(args.model)
    if args.deps:
        tb = load_treebank(args.trees, args.deps, vocab=model.vocab)
    else:
        from .data import TreebankItem
        from .dependency import DepArcs

        with open(args.trees, encoding="utf-8") as fh:
            trees = read_trees(fh, args.trees)
        # dependency arcs are not used for tracing; a flat placeholder keeps the item shape
        tb = [TreebankItem(Sentence(w, t), tree, DepArcs(tuple([0] + [1] * (len(w) - 1)))) for w, t, tree in trees]
    stats = inspect_treebank(model, tb, args.out_dir, args.mode)
    print(json.dumps({"labels": stats.counts, "top_heads": stats.to_dict()["top_heads"], "out_dir": args.out_dir}, indent=2))
    return 0


def _print_tables(tables: dict[str, list[dict]], out_dir: str | None) -> None:
    from .experiments import to_csv, write_csv

    for name, rows in tables.items():
        print(f"# {name}")
        print(to_csv(rows), end="")
        if out_dir:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            write_csv(rows, Path(out_dir) / f"{name}.csv")


def cmd_ablate(args) -> int:
    from .experiments import ablate, resolve_data

    config = TrainConfig.from_json(args.config)
    tb, dev = resolve_data(config, args.trees, args.deps)
    _print_tables(ablate(config, tb, dev, args.rd_p), args.out_dir)
    return 0


def cmd_sweep(args) -> int:
    from .experiments import layer_sweep, resolve_data

    try:
        layers = [int(x) for x in args.layers.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"--layers must be comma-separated integers, got {args.layers!r}") from None
    config = TrainConfig.from_json(args.config)
    tb, dev = resolve_data(config, args.trees, args.deps)
    _print_tables({"layers": layer_sweep(config, tb, layers, dev)}, args.out_dir)
    return 0


def cmd_gen_toy(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tb = generate_toy_corpus(args.seed, args.size)
    save_treebank(tb, out / "trees.txt", out / "deps.conll")
    print(json.dumps({"sentences": len(tb), "trees": str(out / "trees.txt"), "deps": str(out / "deps.conll")}))
    return 0


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors (exit 1); 2 is reserved for divergence."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lalparse", description="Label attention constituency and dependency parser.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train", help="train a parser and write a checkpoint")
    s.add_argument("--trees", help="bracketed trees, one per line")
    s.add_argument("--deps", help="CoNLL-style dependency file aligned with --trees")
    s.add_argument("--dev-trees")
    s.add_argument("--dev-deps")
    s.add_argument("--config", required=True, help="training configuration (JSON)")
    s.add_argument("--out", required=True, help="checkpoint path")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("parse", help="parse word/TAG sentences")
    s.add_argument("--model", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--format", choices=["brackets", "conll"], default="brackets")
    s.add_argument("--out")
    s.set_defaults(func=cmd_parse)

    s = sub.add_parser("eval", help="score a checkpoint against gold files")
    s.add_argument("--model", required=True)
    s.add_argument("--trees", required=True)
    s.add_argument("--deps", required=True)
    s.add_argument("--punct", help="comma-separated punctuation tags (default PUNCT)")
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("inspect-heads", help="write head contribution traces and statistics")
    s.add_argument("--model", required=True)
    s.add_argument("--trees", required=True)
    s.add_argument("--deps")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--mode", choices=["l1_average", "softmax"], default="l1_average")
    s.set_defaults(func=cmd_inspect)

    s = sub.add_parser("ablate", help="run the PFL x RD and QV x Conc ablations")
    s.add_argument("--config", required=True)
    s.add_argument("--trees")
    s.add_argument("--deps")
    s.add_argument("--rd-p", type=float, default=0.2, help="residual dropout for the RD=yes rows")
    s.add_argument("--out-dir")
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("sweep-layers", help="train one model per self-attention layer count")
    s.add_argument("--config", required=True)
    s.add_argument("--layers", required=True, help="e.g. 0,1,2,3")
    s.add_argument("--trees")
    s.add_argument("--deps")
    s.add_argument("--out-dir")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("gen-toy", help="write a synthetic toy treebank")
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--size", type=int, default=50)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_gen_toy)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except TrainingDiverged as e:
        print(f"error: training diverged: {e}", file=sys.stderr)
        return 2
    except INPUT_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
