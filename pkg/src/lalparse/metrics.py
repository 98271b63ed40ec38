"""Labelled bracket precision/recall/F1 and attachment scores.

Brackets are matched as multisets of ``(i, j, category)`` with collapsed
unary chains expanded and empty labels dropped; preterminals are not
brackets.  Attachment scores skip words whose POS tag is punctuation.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .constituency import ParseTree, expand_label
from .dependency import DepArcs

DEFAULT_PUNCT = frozenset({"PUNCT"})


class VocabMismatchError(ValueError):
    """Gold data uses labels the model cannot produce."""


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    uas: float
    las: float
    per_label: dict[str, dict[str, float]] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)

    def row(self) -> dict[str, float]:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1, "uas": self.uas, "las": self.las}

    def to_dict(self) -> dict:
        return asdict(self)


def brackets(tree: ParseTree) -> Counter:
    return Counter((i, j, cat) for i, j, l in tree.labeled() for cat in expand_label(l))


def _prf(match: int, pred: int, gold: int) -> tuple[float, float, float]:
    if pred == 0 and gold == 0:
        return 100.0, 100.0, 100.0
    p = 100.0 * match / pred if pred else 0.0
    r = 100.0 * match / gold if gold else 0.0
    f = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def score(
    pairs: Iterable[tuple[ParseTree, ParseTree, DepArcs, DepArcs, Sequence[str]]],
    punct: Iterable[str] = DEFAULT_PUNCT,
) -> EvalReport:
    """Corpus scores from ``(pred_tree, gold_tree, pred_arcs, gold_arcs, tags)``."""
    punct = frozenset(punct)
    match = n_pred = n_gold = 0
    by_label: dict[str, list[int]] = {}
    words = heads_ok = both_ok = 0
    for pred_tree, gold_tree, pred_arcs, gold_arcs, tags in pairs:
        pb, gb = brackets(pred_tree), brackets(gold_tree)
        common = pb & gb
        match += sum(common.values())
        n_pred += sum(pb.values())
        n_gold += sum(gb.values())
        for counter, slot in ((common, 0), (pb, 1), (gb, 2)):
            for (_, _, cat), c in counter.items():
                by_label.setdefault(cat, [0, 0, 0])[slot] += c
        for k, tag in enumerate(tags):
            if tag in punct:
                continue
            words += 1
            if pred_arcs.heads[k] == gold_arcs.heads[k]:
                heads_ok += 1
                if pred_arcs.labels is not None and pred_arcs.labels[k] == gold_arcs.labels[k]:
                    both_ok += 1
    p, r, f = _prf(match, n_pred, n_gold)
    uas = 100.0 * heads_ok / words if words else 100.0
    las = 100.0 * both_ok / words if words else 100.0
    per_label = {}
    for cat, (m, np_, ng) in sorted(by_label.items()):
        lp, lr, lf = _prf(m, np_, ng)
        per_label[cat] = {"precision": lp, "recall": lr, "f1": lf, "gold": ng, "pred": np_}
    counts = {"matched": match, "predicted": n_pred, "gold": n_gold, "words": words, "heads": heads_ok, "labeled": both_ok}
    return EvalReport(p, r, f, uas, las, per_label, counts)


def check_vocab(model, treebank) -> None:
    labels = set(model.vocab.labels)
    dep_labels = set(model.vocab.dep_labels)
    for it in treebank:
        missing = {l for _, _, l in it.tree.labeled()} - labels
        missing |= set(it.arcs.labels) - dep_labels
        if missing:
            raise VocabMismatchError(f"labels unknown to the model: {sorted(missing)}")


def evaluate(model, treebank, punct: Iterable[str] = DEFAULT_PUNCT) -> EvalReport:
    """Parse every sentence of ``treebank`` and score against its gold."""
    check_vocab(model, treebank)

    def pairs():
        for it in treebank:
            tree, arcs, _ = model.predict(model.example(it.sentence))
            yield tree, it.tree, arcs, it.arcs, it.sentence.tags

    return score(pairs(), punct)
