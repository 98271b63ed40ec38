"""Biaffine dependency scoring, loss and tree decoding.

Arc scores are ``n x (n+1)``: row ``i`` is dependent ``i+1``, column ``j``
is candidate head ``j`` with column 0 the root.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import tensor as T
from .nn import Linear, Module
from .tensor import ShapeError, Tensor


class ConllError(ValueError):
    """Malformed dependency TSV input."""


@dataclass(frozen=True)
class DepArcs:
    heads: tuple[int, ...]
    labels: tuple | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "heads", tuple(int(h) for h in self.heads))
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))
            if len(self.labels) != len(self.heads):
                raise ShapeError("one label per word is required")
        n = len(self.heads)
        for d, h in enumerate(self.heads, start=1):
            if not 0 <= h <= n or h == d:
                raise ValueError(f"word {d} has invalid head {h}")

    @property
    def n(self) -> int:
        return len(self.heads)

    def is_tree(self, single_root: bool = True) -> bool:
        """Connected and acyclic, rooted at 0 (with one root child if asked)."""
        if single_root and sum(1 for h in self.heads if h == 0) != 1:
            return False
        for start in range(1, self.n + 1):
            seen = set()
            node = start
            while node != 0:
                if node in seen:
                    return False
                seen.add(node)
                node = self.heads[node - 1]
        return True


def arc_tree_score(scores: np.ndarray, heads: Sequence[int]) -> float:
    """Sum of selected arc scores, accumulated over dependents in order."""
    total = 0.0
    for i, h in enumerate(heads):
        total += float(scores[i, h])
    return total


# -- scoring ---------------------------------------------------------------

class DependencyScorer(Module):
    """Biaffine arc scorer plus biaffine per-label scorer.

    Dependent and head representations each pass through their own one-layer
    perceptron; a learned root vector supplies the head candidate for
    column 0.
    """

    def __init__(self, rng: np.random.Generator, d_in: int, d_arc: int, d_label: int, num_labels: int) -> None:
        super().__init__()
        if num_labels < 1:
            raise ValueError("need at least one dependency label")
        self.num_labels = num_labels
        self.add_param("root", T.uniform_init(rng, (1, d_in), d_in))
        self.add_module("arc_dep", Linear(rng, d_in, d_arc))
        self.add_module("arc_head", Linear(rng, d_in, d_arc))
        self.add_param("arc_W", T.uniform_init(rng, (d_arc, d_arc), d_arc))
        self.add_param("arc_U", T.uniform_init(rng, (d_arc, 1), d_arc))
        self.add_param("arc_V", T.uniform_init(rng, (d_arc, 1), d_arc))
        self.add_param("arc_b", T.parameter(np.zeros(1)))
        self.add_module("label_dep", Linear(rng, d_in, d_label))
        self.add_module("label_head", Linear(rng, d_in, d_label))
        self.add_param("label_W", T.uniform_init(rng, (num_labels, d_label, d_label), d_label))
        self.add_param("label_U", T.uniform_init(rng, (d_label, num_labels), d_label))
        self.add_param("label_V", T.uniform_init(rng, (d_label, num_labels), d_label))
        self.add_param("label_b", T.parameter(np.zeros(num_labels)))

    def _with_root(self, word_reps: Tensor) -> Tensor:
        if word_reps.ndim != 2 or word_reps.shape[1] != self.root.shape[1]:
            raise ShapeError(f"word representations {word_reps.shape} do not match width {self.root.shape[1]}")
        return T.concat([self.root, word_reps], axis=0)

    def arc_scores(self, word_reps: Tensor) -> Tensor:
        dep = T.relu(self.arc_dep(word_reps))
        head = T.relu(self.arc_head(self._with_root(word_reps)))
        bilinear = T.matmul(T.matmul(dep, self.arc_W), T.transpose(head))
        return T.add(T.add(T.add(bilinear, T.matmul(dep, self.arc_U)), T.transpose(T.matmul(head, self.arc_V))), self.arc_b)

    def label_scores(self, word_reps: Tensor, heads: Sequence[int]) -> Tensor:
        """``n x labels`` scores of each word's label given its head."""
        heads = np.asarray(heads, dtype=np.int64)
        if heads.shape != (word_reps.shape[0],):
            raise ShapeError("one head per word is required")
        dep = T.relu(self.label_dep(word_reps))
        head = T.take(T.relu(self.label_head(self._with_root(word_reps))), heads)
        bilinear = T.tsum(T.mul(T.matmul(dep, self.label_W), head), axis=-1)  # labels x n
        linear = T.add(T.matmul(dep, self.label_U), T.matmul(head, self.label_V))
        return T.add(T.add(T.transpose(bilinear), linear), self.label_b)


def biaffine_arc_scores(word_reps: Tensor, scorer: DependencyScorer) -> Tensor:
    return scorer.arc_scores(word_reps)


def dep_loss(arc_scores: Tensor, label_scores: Tensor, heads: Sequence[int], labels: Sequence[int]) -> Tensor:
    """Negative log-likelihood of the gold heads and of the gold labels
    (label scores computed on the gold dependent-head pairs), summed over
    words."""
    n = arc_scores.shape[0]
    if arc_scores.shape != (n, n + 1) or label_scores.shape[0] != n or len(heads) != n or len(labels) != n:
        raise ShapeError("scores and gold arcs disagree on sentence length")
    rows = np.arange(n)
    arc_lp = T.take_flat(T.log_softmax(arc_scores, axis=-1), rows * (n + 1) + np.asarray(heads))
    m = label_scores.shape[1]
    lab_lp = T.take_flat(T.log_softmax(label_scores, axis=-1), rows * m + np.asarray(labels))
    return T.mul(T.add(T.tsum(arc_lp), T.tsum(lab_lp)), -1.0)


# -- decoding --------------------------------------------------------------

def _find_cycle(heads: np.ndarray) -> list[int] | None:
    n = heads.size
    state = np.zeros(n, dtype=np.int8)  # 0 unseen, 1 on current path, 2 done
    for start in range(1, n):
        path = []
        node = start
        while node > 0 and state[node] == 0:
            state[node] = 1
            path.append(node)
            node = heads[node]
        if node > 0 and state[node] == 1:
            return path[path.index(node):]
        for v in path:
            state[v] = 2
    return None


def _max_arborescence(M: np.ndarray) -> np.ndarray:
    """Chu-Liu/Edmonds on ``M[head, dep]`` (``-inf`` marks forbidden arcs).

    Returns the head of every node (``-1`` for the root, node 0).
    """
    N = M.shape[0]
    heads = np.full(N, -1, dtype=np.int64)
    heads[1:] = M[:, 1:].argmax(axis=0)
    cycle = _find_cycle(heads)
    if cycle is None:
        return heads
    in_cycle = np.zeros(N, dtype=bool)
    in_cycle[cycle] = True
    cyc = np.array(sorted(cycle))
    rest = np.flatnonzero(~in_cycle)
    c = rest.size
    M2 = np.full((c + 1, c + 1), -np.inf)
    M2[:c, :c] = M[np.ix_(rest, rest)]
    out_block = M[np.ix_(cyc, rest)]
    out_src = cyc[out_block.argmax(axis=0)]
    M2[c, :c] = out_block.max(axis=0)
    in_block = M[np.ix_(rest, cyc)] - M[heads[cyc], cyc][None, :]
    in_dst = cyc[in_block.argmax(axis=1)]
    M2[:c, c] = in_block.max(axis=1)
    M2[:, 0] = -np.inf
    np.fill_diagonal(M2, -np.inf)

    sub = _max_arborescence(M2)
    result = heads.copy()
    for new_b in range(1, c):
        b = rest[new_b]
        hb = sub[new_b]
        result[b] = out_src[new_b] if hb == c else rest[hb]
    entering = rest[sub[c]]
    result[in_dst[sub[c]]] = entering
    return result


def _arc_matrix(scores: np.ndarray) -> np.ndarray:
    n = scores.shape[0]
    M = np.full((n + 1, n + 1), -np.inf)
    M[:, 1:] = scores.T
    M[np.arange(1, n + 1), np.arange(1, n + 1)] = -np.inf
    return M


def decode_arcs(scores, mode: str = "cle", single_root: bool = True) -> DepArcs:
    """Heads maximising the total arc score.

    ``mode="cle"`` returns the best arborescence rooted at 0 (with exactly
    one root child when ``single_root``); ``mode="greedy"`` takes each
    word's best head independently and may not form a tree.
    """
    scores = np.asarray(scores.data if isinstance(scores, Tensor) else scores, dtype=np.float64)
    n = scores.shape[0]
    if scores.shape != (n, n + 1) or n < 1:
        raise ShapeError(f"arc scores must be n x (n+1), got {scores.shape}")
    if mode == "greedy":
        masked = scores.copy()
        masked[np.arange(n), np.arange(1, n + 1)] = -np.inf
        return DepArcs(tuple(masked.argmax(axis=1)))
    if mode != "cle":
        raise ValueError(f"unknown decoding mode {mode!r}")
    M = _arc_matrix(scores)
    heads = _max_arborescence(M)[1:]
    if single_root and np.count_nonzero(heads == 0) > 1:
        best, best_score = None, -np.inf
        for r in range(1, n + 1):
            Mr = M.copy()
            Mr[0, 1:] = -np.inf
            Mr[0, r] = M[0, r]
            cand = _max_arborescence(Mr)[1:]
            s = arc_tree_score(scores, cand)
            if s > best_score:
                best, best_score = cand, s
        heads = best
    return DepArcs(tuple(heads))


def label_arcs(word_reps: Tensor, arcs: DepArcs, scorer: DependencyScorer) -> DepArcs:
    """Attach the highest-scoring label (lowest id on ties) to each arc."""
    with T.no_grad():
        scores = scorer.label_scores(word_reps, arcs.heads).data
    return DepArcs(arcs.heads, tuple(int(l) for l in scores.argmax(axis=1)))


# -- CoNLL-style TSV -------------------------------------------------------

def read_conll(lines: Iterable[str], source: str = "<input>") -> list[tuple[list[str], list[str], list[int], list[str]]]:
    """Sentences of ``index word POS head label`` rows (10-column CoNLL-X/U
    rows are also accepted; comment lines start with ``#``)."""
    sentences = []
    cur: list[tuple[str, str, int, str]] = []

    def flush(lineno: int) -> None:
        if not cur:
            return
        words, tags, heads, labels = map(list, zip(*cur))
        sentences.append((words, tags, heads, labels))
        cur.clear()

    lineno = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            flush(lineno)
            continue
        if line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) == 10:
            if "-" in cols[0] or "." in cols[0]:
                continue
            cols = [cols[0], cols[1], cols[3], cols[6], cols[7]]
        if len(cols) != 5:
            raise ConllError(f"{source}:{lineno}: expected 5 tab-separated columns, got {len(cols)}")
        try:
            idx, head = int(cols[0]), int(cols[3])
        except ValueError:
            raise ConllError(f"{source}:{lineno}: index and head must be integers") from None
        if idx != len(cur) + 1:
            raise ConllError(f"{source}:{lineno}: expected token index {len(cur) + 1}, got {idx}")
        cur.append((cols[1], cols[2], head, cols[4]))
    flush(lineno)
    return sentences


def format_conll(words: Sequence[str], tags: Sequence[str], heads: Sequence[int], labels: Sequence[str]) -> str:
    rows = [f"{k}\t{w}\t{t}\t{h}\t{l}" for k, (w, t, h, l) in enumerate(zip(words, tags, heads, labels), start=1)]
    return "\n".join(rows) + "\n"
