import itertools
from functools import lru_cache

import numpy as np
import pytest

from lalparse.data import Treebank, generate_toy_corpus
from lalparse.encoder import EncoderConfig
from lalparse.model import LALParser, ParserConfig

# acceptance criterion id -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def small_encoder(**kw) -> EncoderConfig:
    base = dict(
        num_layers=1, d_content=12, d_position=4, max_len=16, sa_heads=2, sa_d_ff=16,
        lal_heads=3, d_qk=4, d_v=4, d_out=4, use_pfl=False, lal_d_ff=16,
    )
    base.update(kw)
    return EncoderConfig(**base)


def small_parser(**kw) -> ParserConfig:
    return ParserConfig(small_encoder(**kw), span_hidden=8, arc_dim=8, label_dim=4)


@pytest.fixture(scope="session")
def toy_small() -> Treebank:
    return generate_toy_corpus(3, 12)


@pytest.fixture()
def small_model(toy_small) -> LALParser:
    return LALParser(small_parser(), toy_small.vocab, seed=0)


# -- enumeration oracles ---------------------------------------------------

@lru_cache(maxsize=None)
def binary_bracketings(i: int, j: int) -> tuple:
    """Every binary tree over (i, j) as nested (i, j, left, right) tuples."""
    if j - i == 1:
        return ((i, j, None, None),)
    out = []
    for k in range(i + 1, j):
        for left in binary_bracketings(i, k):
            for right in binary_bracketings(k, j):
                out.append((i, j, left, right))
    return tuple(out)


def bracket_spans(node) -> list:
    i, j, left, right = node
    if left is None:
        return [(i, j)]
    return [(i, j)] + bracket_spans(left) + bracket_spans(right)


def assignment_scores(chart: np.ndarray, node) -> np.ndarray:
    """Scores of every label assignment of one bracketing, one array axis
    per span, each summed as own + (left + right)."""
    i, j, left, right = node
    own = chart[i, j]
    if left is None:
        return own
    a = assignment_scores(chart, left)
    b = assignment_scores(chart, right)
    kids = a.reshape(a.shape + (1,) * b.ndim) + b
    return own.reshape((-1,) + (1,) * kids.ndim) + kids


def enumerate_best(chart: np.ndarray) -> float:
    n = chart.shape[0] - 1
    return max(float(assignment_scores(chart, t).max()) for t in binary_bracketings(0, n))


def hamming_oracle(n: int, num_labels: int, gold_spans) -> np.ndarray:
    """1 for every (span, label) that is not the gold label of the span,
    with spans absent from gold carrying the empty gold label 0."""
    gold = {(i, j): l for i, j, l in gold_spans}
    delta = np.zeros((n + 1, n + 1, num_labels))
    for i in range(n):
        for j in range(i + 1, n + 1):
            for l in range(num_labels):
                delta[i, j, l] = 0.0 if l == gold.get((i, j), 0) else 1.0
    return delta


def random_binary_tree(rng, n: int, num_labels: int, empty_prob: float = 0.3):
    trees = binary_bracketings(0, n)
    t = trees[int(rng.integers(len(trees)))]
    spans = []
    for i, j in bracket_spans(t):
        l = 0 if (rng.random() < empty_prob and (i, j) != (0, n)) else int(rng.integers(1, num_labels))
        spans.append((i, j, l))
    return spans


def rooted_trees(n: int, single_root: bool = True):
    """All head vectors over words 1..n that form trees rooted at 0."""
    for heads in itertools.product(range(n + 1), repeat=n):
        if any(h == d for d, h in enumerate(heads, start=1)):
            continue
        if single_root and heads.count(0) != 1:
            continue
        ok = True
        for start in range(1, n + 1):
            seen, node = set(), start
            while node != 0:
                if node in seen:
                    ok = False
                    break
                seen.add(node)
                node = heads[node - 1]
            if not ok:
                break
        if ok:
            yield heads


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
