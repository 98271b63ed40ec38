"""Per-head contributions to span vectors and head-to-word attention traces.

A span vector is the concatenation of one slice per label attention head,
so without a feed-forward layer mixing the slices each head's share of the
vector can be read off directly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .attention import LabelAttentionConfig
from .constituency import ParseTree, span_index
from .encoder import Sentence
from .tensor import ContractError

MODES = ("l1_average", "softmax")


def check_interpretable(config: LabelAttentionConfig) -> None:
    """Head slices are only separable without the feed-forward layer and
    with concatenated head outputs."""
    if config.use_pfl:
        raise ContractError(
            "head contributions need use_pfl=false: the position-wise feed-forward "
            "layer mixes all head slices, so a slice no longer belongs to one head"
        )
    if config.combine_mode != "concat":
        raise ContractError("head contributions need combine_mode='concat'")


def head_contributions(span_vec, num_heads: int, mode: str = "l1_average") -> np.ndarray:
    """Share of ``span_vec`` attributable to each head slice.

    ``l1_average``: L1 norm of each slice over the total L1 norm (uniform for
    an all-zero vector).  ``softmax``: softmax over mean absolute activations.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    v = np.asarray(getattr(span_vec, "data", span_vec), dtype=np.float64).reshape(-1)
    if num_heads < 1 or v.size % num_heads:
        raise ValueError(f"span vector of width {v.size} does not split into {num_heads} heads")
    slices = np.abs(v.reshape(num_heads, -1))
    if mode == "l1_average":
        norms = slices.sum(axis=1)
        total = norms.sum()
        if total == 0.0:
            return np.full(num_heads, 1.0 / num_heads)
        return norms / total
    means = slices.mean(axis=1)
    e = np.exp(means - means.max())
    return e / e.sum()


@dataclass
class HeadTrace:
    """Contributions and attention rows for one span (or one word, with
    ``span`` set to ``None``)."""

    contributions: list[float]
    attention: list[list[float]]
    predicted: str
    gold: str | None = None
    span: tuple[int, int] | None = None
    word: int | None = None
    sentence: int | None = None
    words: list[str] | None = None

    @property
    def top_head(self) -> int:
        return int(np.argmax(self.contributions))

    def to_json(self) -> str:
        d = asdict(self)
        if d["span"] is not None:
            d["span"] = list(d["span"])
        return json.dumps(d, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "HeadTrace":
        d = json.loads(line)
        if d.get("span") is not None:
            d["span"] = tuple(d["span"])
        return cls(**d)


def attention_trace(
    sentence: Sentence,
    model,
    gold: ParseTree | None = None,
    mode: str = "l1_average",
    sentence_id: int | None = None,
) -> list[HeadTrace]:
    """One trace per predicted non-empty span, plus gold spans the model
    missed when ``gold`` is given.  Spans are listed in (start, -end) order."""
    config = model.lal_config
    check_interpretable(config)
    tree, _, f = model.predict(model.example(sentence))
    attention = f.lal.head_attention.data.tolist()
    predicted = {(i, j): l for i, j, l in tree.labeled()}
    gold_map = {(i, j): l for i, j, l in gold.labeled()} if gold is not None else {}
    _, _, lookup = span_index(len(sentence))
    traces = []
    for i, j in sorted(set(predicted) | set(gold_map), key=lambda s: (s[0], -s[1])):
        vec = f.span_vecs.data[lookup[i, j]]
        traces.append(
            HeadTrace(
                contributions=head_contributions(vec, config.num_heads, mode).tolist(),
                attention=attention,
                predicted=predicted.get((i, j), ""),
                gold=gold_map.get((i, j), "") if gold is not None else None,
                span=(i, j),
                sentence=sentence_id,
                words=list(sentence.words),
            )
        )
    return traces


def word_traces(sentence: Sentence, model, mode: str = "l1_average") -> list[HeadTrace]:
    """Per-word contributions of each head to the label attention output."""
    config = model.lal_config
    check_interpretable(config)
    _, _, f = model.predict(model.example(sentence))
    attention = f.lal.head_attention.data.tolist()
    return [
        HeadTrace(head_contributions(row, config.num_heads, mode).tolist(), attention, sentence.words[k], word=k, words=list(sentence.words))
        for k, row in enumerate(f.lal.word_reps.data)
    ]


@dataclass
class HeadStats:
    num_heads: int
    counts: dict[str, int] = field(default_factory=dict)
    top_head_freq: dict[str, list[float]] = field(default_factory=dict)
    mean_contribution: dict[str, list[float]] = field(default_factory=dict)
    # spans whose predicted label differs from gold, grouped by the gold label
    confusion: dict[str, list[float]] = field(default_factory=dict)
    confusion_counts: dict[str, int] = field(default_factory=dict)
    mode: str | None = None

    def rows(self) -> list[dict]:
        return [
            {"label": label, "head": h, "frequency": self.top_head_freq[label][h], "mean_contribution": self.mean_contribution[label][h]}
            for label in sorted(self.counts)
            for h in range(self.num_heads)
        ]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["top_heads"] = {label: int(np.argmax(freq)) for label, freq in self.top_head_freq.items()}
        return d


def aggregate_stats(traces: Iterable[HeadTrace], mode: str | None = None) -> HeadStats:
    """Top-head frequencies and mean contributions per predicted label.

    Sums use ``math.fsum`` so the result does not depend on trace order.
    """
    traces = list(traces)
    if not traces:
        raise ContractError("aggregate_stats needs at least one trace")
    num_heads = len(traces[0].contributions)
    tops: dict[str, list[int]] = {}
    contribs: dict[str, list[list[float]]] = {}
    confused: dict[str, list[int]] = {}
    for t in traces:
        if len(t.contributions) != num_heads:
            raise ContractError("traces disagree on the number of heads")
        label = t.predicted
        tops.setdefault(label, [0] * num_heads)[t.top_head] += 1
        contribs.setdefault(label, []).append(t.contributions)
        if t.gold is not None and t.gold != t.predicted:
            confused.setdefault(t.gold, [0] * num_heads)[t.top_head] += 1
    stats = HeadStats(num_heads, mode=mode)
    for label in sorted(tops):
        n = len(contribs[label])
        stats.counts[label] = n
        stats.top_head_freq[label] = [c / n for c in tops[label]]
        stats.mean_contribution[label] = [math.fsum(col) / n for col in zip(*contribs[label])]
    for label in sorted(confused):
        n = sum(confused[label])
        stats.confusion_counts[label] = n
        stats.confusion[label] = [c / n for c in confused[label]]
    return stats


# -- files -----------------------------------------------------------------

def write_traces(traces: Sequence[HeadTrace], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in traces:
            fh.write(t.to_json() + "\n")


def read_traces(path: str | Path) -> list[HeadTrace]:
    with open(path, encoding="utf-8") as fh:
        return [HeadTrace.from_json(line) for line in fh if line.strip()]


def write_head_stats(stats: HeadStats, csv_path: str | Path, json_path: str | Path | None = None) -> None:
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["label", "head", "frequency", "mean_contribution"])
        writer.writeheader()
        writer.writerows(stats.rows())
    if json_path is not None:
        Path(json_path).write_text(json.dumps(stats.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def inspect_treebank(model, treebank, out_dir: str | Path, mode: str = "l1_average") -> HeadStats:
    """Trace every sentence of ``treebank`` and write ``traces.jsonl``,
    ``head_stats.csv`` and ``head_stats.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traces = []
    for k, it in enumerate(treebank):
        traces.extend(attention_trace(it.sentence, model, it.tree, mode, sentence_id=k))
    stats = aggregate_stats(traces, mode)
    write_traces(traces, out / "traces.jsonl")
    write_head_stats(stats, out / "head_stats.csv", out / "head_stats.json")
    return stats
