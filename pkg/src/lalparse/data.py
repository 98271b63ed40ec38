"""Treebank files and the synthetic toy corpus."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .constituency import BracketError, ParseTree, TreeError, expand_label, parse_bracketed, to_bracketed
from .dependency import ConllError, DepArcs, format_conll, read_conll
from .encoder import Sentence, Vocab


class AlignmentError(ValueError):
    """Tree file and dependency file disagree."""


class TreebankItem(NamedTuple):
    sentence: Sentence
    tree: ParseTree
    arcs: DepArcs


@dataclass
class Treebank:
    items: list[TreebankItem]
    vocab: Vocab

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[TreebankItem]:
        return iter(self.items)

    @classmethod
    def from_items(cls, items: list[TreebankItem], vocab: Vocab | None = None) -> "Treebank":
        if vocab is None:
            vocab = Vocab.build(
                (w for it in items for w in it.sentence.words),
                (t for it in items for t in it.sentence.tags),
                (l for it in items for _, _, l in it.tree.labeled()),
                (l for it in items for l in it.arcs.labels),
            )
        return cls(list(items), vocab)


def read_trees(lines: Iterable[str], source: str = "<trees>") -> list[tuple[list[str], list[str], ParseTree]]:
    out = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            out.append(parse_bracketed(line))
        except (BracketError, TreeError) as e:
            raise BracketError(f"{source}:{lineno}: {e}") from None
    return out


def load_treebank(tree_file: str | Path, dep_file: str | Path, vocab: Vocab | None = None) -> Treebank:
    """Pair the bracketed trees with the dependency rows, sentence by sentence.

    Words must agree between the two files; the POS tags come from the tree
    file.  The vocabulary is built from the data unless given.
    """
    tree_file, dep_file = Path(tree_file), Path(dep_file)
    with open(tree_file, encoding="utf-8") as fh:
        trees = read_trees(fh, str(tree_file))
    with open(dep_file, encoding="utf-8") as fh:
        deps = read_conll(fh, str(dep_file))
    if len(trees) != len(deps):
        raise AlignmentError(f"{tree_file} has {len(trees)} trees but {dep_file} has {len(deps)} sentences")
    items = []
    for k, ((words, tags, tree), (dwords, _, heads, labels)) in enumerate(zip(trees, deps), start=1):
        if words != dwords:
            raise AlignmentError(f"sentence {k}: words differ between {tree_file} and {dep_file}")
        try:
            arcs = DepArcs(tuple(heads), tuple(labels))
        except ValueError as e:
            raise ConllError(f"{dep_file}: sentence {k}: {e}") from None
        items.append(TreebankItem(Sentence(words, tags), tree, arcs))
    return Treebank.from_items(items, vocab)


def save_treebank(tb: Treebank, tree_file: str | Path, dep_file: str | Path) -> None:
    with open(tree_file, "w", encoding="utf-8") as fh:
        for it in tb:
            fh.write(to_bracketed(it.sentence.words, it.sentence.tags, it.tree) + "\n")
    with open(dep_file, "w", encoding="utf-8") as fh:
        for it in tb:
            s = it.sentence
            fh.write(format_conll(s.words, s.tags, it.arcs.heads, it.arcs.labels) + "\n")


# -- toy grammar -----------------------------------------------------------

# nonterminal -> [(children, probability, head child index)]
GRAMMAR: dict[str, list[tuple[tuple[str, ...], float, int]]] = {
    "S": [(("NP", "VP", "PUNCT"), 1.0, 1)],
    "NP": [(("D", "N"), 0.5, 1), (("D", "A", "N"), 0.25, 2), (("PRON",), 0.25, 0)],
    "VP": [(("V", "NP"), 0.4, 0), (("V", "PP"), 0.25, 0), (("V",), 0.15, 0), (("V", "NP", "ADVP"), 0.2, 0)],
    "PP": [(("P", "NP"), 1.0, 0)],
    "ADVP": [(("ADV",), 1.0, 0)],
}

LEXICON: dict[str, tuple[str, ...]] = {
    "D": ("the", "a", "every", "this"),
    "N": ("cat", "dog", "bird", "man", "park", "ball", "tree", "house"),
    "A": ("big", "small", "red", "old"),
    "PRON": ("she", "he", "it", "they"),
    "V": ("saw", "chased", "liked", "sat", "ran", "found"),
    "P": ("in", "on", "with", "near"),
    "ADV": ("quickly", "slowly", "often"),
    "PUNCT": (".", "!"),
}

# (parent, non-head child) -> dependency label
DEP_LABELS: dict[tuple[str, str], str] = {
    ("S", "NP"): "nsubj",
    ("S", "PUNCT"): "punct",
    ("VP", "NP"): "obj",
    ("VP", "PP"): "obl",
    ("VP", "ADVP"): "advmod",
    ("NP", "D"): "det",
    ("NP", "A"): "amod",
    ("PP", "NP"): "pobj",
}


def _generate(rng: np.random.Generator):
    words: list[str] = []
    tags: list[str] = []
    spans: list[tuple[int, int, str]] = []
    deps: dict[int, tuple[int, str]] = {}

    def expand(symbol: str) -> tuple[int, int, int]:
        """Returns (start, end, lexical head position, 1-based)."""
        if symbol in LEXICON:
            vocab = LEXICON[symbol]
            words.append(vocab[int(rng.integers(len(vocab)))])
            tags.append(symbol)
            return len(words) - 1, len(words), len(words)
        rules = GRAMMAR[symbol]
        k = int(rng.choice(len(rules), p=[r[1] for r in rules]))
        children, _, head_idx = rules[k]
        parts = [(child, *expand(child)) for child in children]
        head = parts[head_idx][3]
        for idx, (child, _, _, child_head) in enumerate(parts):
            if idx != head_idx:
                deps[child_head] = (head, DEP_LABELS[(symbol, child)])
        i, j = parts[0][1], parts[-1][2]
        spans.append((i, j, symbol))
        return i, j, head

    _, n, root = expand("S")
    deps[root] = (0, "root")
    heads = tuple(deps[k][0] for k in range(1, n + 1))
    labels = tuple(deps[k][1] for k in range(1, n + 1))
    return TreebankItem(Sentence(words, tags), ParseTree(n, tuple(spans)), DepArcs(heads, labels))


def generate_toy_corpus(seed: int, size: int) -> Treebank:
    """``size`` sentences of 3 to 9 words from the toy grammar; dependency
    heads follow the grammar's head children.  Deterministic per seed."""
    if size < 1:
        raise ValueError("size must be >= 1")
    rng = np.random.default_rng(seed)
    return Treebank.from_items([_generate(rng) for _ in range(size)])


def span_categories(tree: ParseTree) -> list[str]:
    return [cat for _, _, l in tree.labeled() for cat in expand_label(l)]
