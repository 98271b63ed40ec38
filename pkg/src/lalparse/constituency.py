"""Span-based constituency parsing: span vectors, scoring, CKY decoding and
the margin loss.

Spans use fencepost indices: ``(i, j)`` covers words ``i+1 .. j``.  In chart
space labels are integer ids with ``0`` the empty category, whose score is
fixed at zero; trees read from text carry string labels with ``""`` empty.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Hashable, Mapping, Sequence

import numpy as np

from . import kernels
from . import tensor as T
from .nn import LayerNorm, Linear, Module
from .tensor import ShapeError, Tensor

EMPTY = 0
EMPTY_LABEL = ""


class TreeError(ValueError):
    """A set of spans does not form a valid bracketing."""


class BracketError(ValueError):
    """Malformed bracketed-tree text."""


def is_empty(label: Hashable) -> bool:
    if isinstance(label, str):
        return label == EMPTY_LABEL
    return label == EMPTY


def expand_label(label: str) -> list[str]:
    """Split a collapsed unary chain ``"S+VP"`` into its categories."""
    return [part for part in str(label).split("+") if part]


@dataclass(frozen=True)
class ParseTree:
    n: int
    spans: tuple

    def __post_init__(self) -> None:
        spans = tuple(sorted(((int(i), int(j), l) for i, j, l in self.spans), key=lambda s: (s[0], -s[1])))
        object.__setattr__(self, "spans", spans)
        self._validate()

    def _validate(self) -> None:
        n = self.n
        if n < 1:
            raise TreeError("a tree needs at least one word")
        seen = set()
        stack: list[tuple[int, int]] = []
        for i, j, _ in self.spans:
            if not 0 <= i < j <= n:
                raise TreeError(f"span ({i}, {j}) outside 0..{n}")
            if (i, j) in seen:
                raise TreeError(f"span ({i}, {j}) appears twice")
            seen.add((i, j))
            while stack and stack[-1][1] <= i:
                stack.pop()
            if stack and j > stack[-1][1]:
                raise TreeError(f"span ({i}, {j}) crosses ({stack[-1][0]}, {stack[-1][1]})")
            stack.append((i, j))
        if (0, n) not in seen:
            raise TreeError(f"the full span (0, {n}) is missing")

    def labeled(self) -> frozenset:
        return frozenset(s for s in self.spans if not is_empty(s[2]))

    def label_map(self) -> dict[tuple[int, int], Hashable]:
        return {(i, j): l for i, j, l in self.spans}

    def nested(self):
        """Root node ``(i, j, label, children)`` of the span hierarchy."""
        root = None
        stack: list = []
        for i, j, l in self.spans:
            node = (i, j, l, [])
            while stack and stack[-1][1] <= i:
                stack.pop()
            if stack:
                stack[-1][3].append(node)
            else:
                root = node
            stack.append(node)
        return root

    def relabel(self, names: Sequence[str]) -> "ParseTree":
        return ParseTree(self.n, tuple((i, j, names[l]) for i, j, l in self.spans))

    def to_ids(self, index: Mapping[str, int]) -> "ParseTree":
        try:
            return ParseTree(self.n, tuple((i, j, EMPTY if is_empty(l) else index[l]) for i, j, l in self.spans))
        except KeyError as e:
            raise KeyError(f"label {e.args[0]!r} is not in the label vocabulary") from None

    def is_binary(self) -> bool:
        def ok(node) -> bool:
            i, j, _, kids = node
            if j - i == 1:
                return not kids
            return len(kids) == 2 and kids[0][0] == i and kids[1][1] == j and kids[0][1] == kids[1][0] and all(
                ok(k) for k in kids
            )

        return ok(self.nested())


# -- bracketed text ------------------------------------------------------

_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def _read_sexpr(text: str):
    tokens = _TOKEN.findall(text)
    pos = 0

    def node():
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != "(":
            raise BracketError(f"expected '(' at token {pos}")
        pos += 1
        label = ""
        if pos < len(tokens) and tokens[pos] not in "()":
            label = tokens[pos]
            pos += 1
        kids = []
        while pos < len(tokens) and tokens[pos] != ")":
            if tokens[pos] == "(":
                kids.append(node())
            else:
                kids.append(tokens[pos])
                pos += 1
        if pos >= len(tokens):
            raise BracketError("unbalanced brackets: missing ')'")
        pos += 1
        return [label, *kids]

    tree = node()
    if pos != len(tokens):
        raise BracketError("unbalanced brackets: trailing material after the tree")
    return tree


def parse_bracketed(text: str) -> tuple[list[str], list[str], ParseTree]:
    """Words, POS tags and string-labelled tree of a PTB-style S-expression.

    Unary chains are collapsed into composite labels (``S+VP``); an
    unlabelled outer wrapper is dropped.
    """
    sexpr = _read_sexpr(text)
    words: list[str] = []
    tags: list[str] = []
    spans: dict[tuple[int, int], str] = {}

    def visit(node) -> tuple[int, int]:
        label, kids = node[0], node[1:]
        if len(kids) == 1 and isinstance(kids[0], str):
            if not label:
                raise BracketError(f"preterminal for {kids[0]!r} has no tag")
            words.append(kids[0])
            tags.append(label)
            return len(words) - 1, len(words)
        if not kids or any(isinstance(k, str) for k in kids):
            raise BracketError(f"phrase {label!r} mixes words and phrases or is empty")
        bounds = [visit(k) for k in kids]
        i, j = bounds[0][0], bounds[-1][1]
        if label:
            inner = spans.get((i, j))
            spans[(i, j)] = f"{label}+{inner}" if inner else label
        return i, j

    visit(sexpr)
    n = len(words)
    if n == 0:
        raise BracketError("tree has no words")
    if (0, n) not in spans:
        spans[(0, n)] = EMPTY_LABEL
    return words, tags, ParseTree(n, tuple((i, j, l) for (i, j), l in spans.items()))


def to_bracketed(words: Sequence[str], tags: Sequence[str], tree: ParseTree) -> str:
    """Canonical single-line S-expression; empty-labelled spans are omitted
    except at the root, which becomes an unlabelled wrapper."""
    if len(words) != tree.n or len(tags) != tree.n:
        raise ShapeError("words/tags do not match the tree length")
    keep = [(i, j, l) for i, j, l in tree.spans if not is_empty(l) or (i, j) == (0, tree.n)]
    sub = ParseTree(tree.n, tuple(keep))

    def render(node) -> str:
        i, j, label, kids = node
        parts = []
        pos = i
        for kid in kids:
            parts.extend(f"({tags[w]} {words[w]})" for w in range(pos, kid[0]))
            parts.append(render(kid))
            pos = kid[1]
        parts.extend(f"({tags[w]} {words[w]})" for w in range(pos, j))
        body = " ".join(parts)
        if is_empty(label):
            return f"({body})"
        cats = expand_label(str(label))
        out = body
        for cat in reversed(cats):
            out = f"({cat} {out})"
        return out

    return render(sub.nested())


# -- span vectors ----------------------------------------------------------

@lru_cache(maxsize=256)
def span_index(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Start/end arrays of all ``n(n+1)/2`` spans and an ``(n+1, n+1)``
    lookup from span to row (``-1`` off the upper triangle)."""
    starts, ends = (a.astype(np.int64) for a in np.triu_indices(n + 1, k=1))
    lookup = np.full((n + 1, n + 1), -1, dtype=np.int64)
    lookup[starts, ends] = np.arange(starts.size)
    for arr in (starts, ends, lookup):
        arr.setflags(write=False)
    return starts, ends, lookup


def forward_mask(width: int, groups: int) -> np.ndarray:
    """1.0 on the forward half of every head slice, 0.0 on the backward half."""
    if width % groups:
        raise ShapeError(f"width {width} does not split into {groups} head slices")
    w = width // groups
    if w % 2:
        raise ShapeError(f"head slices of width {w} cannot be split in half")
    return np.tile(np.r_[np.ones(w // 2), np.zeros(w // 2)], groups)


def pad_boundaries(word_reps: Tensor, start: Tensor, stop: Tensor) -> Tensor:
    """Rows ``0 .. n+1``: START, the ``n`` words, STOP."""
    return T.concat([T.reshape(start, (1, -1)), word_reps, T.reshape(stop, (1, -1))], axis=0)


def span_vectors(padded: Tensor, groups: int, starts=None, ends=None) -> Tensor:
    """Span vectors for many spans at once (rows follow ``starts``/``ends``).

    Within each head slice the forward half is ``h_j - h_i`` and the backward
    half ``h_{j+1} - h_{i+1}`` in padded-row indices.
    """
    n = padded.shape[0] - 2
    if starts is None:
        starts, ends, _ = span_index(n)
    starts = np.asarray(starts, dtype=np.int64)
    ends = np.asarray(ends, dtype=np.int64)
    if starts.size and (starts.min() < 0 or ends.max() > n or np.any(starts >= ends)):
        raise ShapeError(f"invalid spans for a sentence of {n} words")
    mask = forward_mask(padded.shape[1], groups)
    fwd = T.sub(T.take(padded, ends), T.take(padded, starts))
    bwd = T.sub(T.take(padded, ends + 1), T.take(padded, starts + 1))
    return T.add(T.mul(fwd, mask), T.mul(bwd, 1.0 - mask))


def span_vector(padded: Tensor, i: int, j: int, groups: int) -> Tensor:
    n = padded.shape[0] - 2
    if not 0 <= i < j <= n:
        raise ShapeError(f"span ({i}, {j}) invalid for {n} words")
    return T.reshape(span_vectors(padded, groups, [i], [j]), (-1,))


class SpanScorer(Module):
    """One hidden layer: ``W2 relu(LN(W1 s + b1)) + b2`` over non-empty labels."""

    def __init__(self, rng: np.random.Generator, d_in: int, d_hidden: int, num_labels: int) -> None:
        super().__init__()
        if num_labels < 2:
            raise ValueError("need the empty label plus at least one category")
        self.num_labels = num_labels
        self.add_module("hidden", Linear(rng, d_in, d_hidden))
        self.add_module("norm", LayerNorm((d_hidden,)))
        self.add_module("output", Linear(rng, d_hidden, num_labels - 1))

    def __call__(self, span_vecs: Tensor) -> Tensor:
        return self.output(T.relu(self.norm(self.hidden(span_vecs))))


class SpanChart:
    """Scores of every span: a ``(spans, labels-1)`` tensor in ``span_index``
    order; the dense ``(n+1, n+1, labels)`` view has the empty column at 0."""

    def __init__(self, n: int, scores: Tensor) -> None:
        starts, _, _ = span_index(n)
        if scores.ndim != 2 or scores.shape[0] != starts.size:
            raise ShapeError(f"expected {starts.size} span rows, got {scores.shape}")
        self.n = n
        self.scores = scores
        self.num_labels = scores.shape[1] + 1

    @classmethod
    def from_array(cls, chart: np.ndarray) -> "SpanChart":
        chart = np.asarray(chart, dtype=np.float64)
        n = chart.shape[0] - 1
        starts, ends, _ = span_index(n)
        return cls(n, Tensor(chart[starts, ends, 1:]))

    def array(self) -> np.ndarray:
        starts, ends, _ = span_index(self.n)
        chart = np.zeros((self.n + 1, self.n + 1, self.num_labels))
        chart[starts, ends, 1:] = self.scores.data
        return chart


def _as_array(chart) -> np.ndarray:
    return chart.array() if isinstance(chart, SpanChart) else np.asarray(chart, dtype=np.float64)


def tree_score(chart, tree: ParseTree) -> float:
    """Sum of the tree's span scores, accumulated bottom-up as
    ``own + (child_1 + child_2 + ...)`` so binary trees reproduce the
    decoder's arithmetic exactly."""
    arr = _as_array(chart)
    if tree.n + 1 > arr.shape[0]:
        raise ShapeError(f"tree over {tree.n} words does not fit chart {arr.shape}")

    def score(node) -> float:
        i, j, label, kids = node
        own = arr[i, j, label]
        if not kids:
            return own
        total = score(kids[0])
        for kid in kids[1:]:
            total = total + score(kid)
        return own + total

    return float(score(tree.nested()))


def hamming_delta(n: int, num_labels: int, gold: ParseTree) -> np.ndarray:
    """Per-span, per-label mistake indicator: 1 unless the label equals the
    gold label of that span (the empty label for spans absent from gold)."""
    delta = np.ones((n + 1, n + 1, num_labels))
    gold_label = np.zeros((n + 1, n + 1), dtype=np.int64)
    for i, j, l in gold.spans:
        gold_label[i, j] = l
    np.put_along_axis(delta, gold_label[:, :, None], 0.0, axis=2)
    return delta


def augment(chart, gold: ParseTree) -> np.ndarray:
    arr = _as_array(chart)
    return arr + hamming_delta(arr.shape[0] - 1, arr.shape[2], gold)


def cky_decode(chart, gold: ParseTree | None = None) -> tuple[ParseTree, float]:
    """Best binary labelled tree and its score.

    With ``gold`` the search maximises ``s(T) + delta(T, gold)`` and the
    returned score includes the Hamming term.
    """
    arr = augment(chart, gold) if gold is not None else _as_array(chart)
    n = arr.shape[0] - 1
    score, label, split = kernels.cky_tables(np.ascontiguousarray(arr))
    spans = []
    todo = [(0, n)]
    while todo:
        i, j = todo.pop()
        spans.append((i, j, int(label[i, j])))
        if j - i > 1:
            k = int(split[i, j])
            todo.extend([(k, j), (i, k)])
    return ParseTree(n, tuple(spans)), score


def hinge_loss(chart: SpanChart, gold: ParseTree) -> Tensor:
    """Structured hinge loss ``max(0, max_T [s(T) + delta] - s(gold))``.

    The gradient is +1 on the labelled spans of the loss-augmented argmax and
    -1 on the gold spans; zero when the margin holds.
    """
    arr = chart.array()
    pred, aug_score = cky_decode(arr, gold)
    if aug_score - tree_score(arr, gold) <= 0.0:
        return Tensor(0.0)
    _, _, lookup = span_index(chart.n)
    width = chart.num_labels - 1
    gold_labels = gold.label_map()
    pred_idx = [lookup[i, j] * width + l - 1 for i, j, l in pred.spans if l != EMPTY]
    gold_idx = [lookup[i, j] * width + l - 1 for i, j, l in gold.spans if l != EMPTY]
    delta = sum(1 for i, j, l in pred.spans if l != gold_labels.get((i, j), EMPTY))
    pred_sum = T.tsum(T.take_flat(chart.scores, pred_idx))
    gold_sum = T.tsum(T.take_flat(chart.scores, gold_idx))
    return T.add(T.sub(pred_sum, gold_sum), float(delta))
