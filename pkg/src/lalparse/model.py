"""Joint constituency and dependency parser over the label attention encoder."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import NamedTuple

import numpy as np

from . import tensor as T
from .attention import AttentionOutput
from .constituency import ParseTree, SpanChart, SpanScorer, cky_decode, hinge_loss, pad_boundaries, span_vectors
from .dependency import DepArcs, DependencyScorer, decode_arcs, dep_loss
from .encoder import Encoder, EncoderConfig, Sentence, Vocab
from .nn import Module
from .tensor import Tensor


@dataclass
class ParserConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    span_hidden: int = 250
    arc_dim: int = 500
    label_dim: int = 100
    arc_decoding: str = "cle"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["encoder"] = self.encoder.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ParserConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown parser options: {sorted(unknown)}")
        enc = d.pop("encoder", {})
        return cls(encoder=enc if isinstance(enc, EncoderConfig) else EncoderConfig.from_dict(enc), **d)


class Example(NamedTuple):
    """A sentence with gold structures in id space."""

    sentence: Sentence
    word_ids: np.ndarray
    tag_ids: np.ndarray
    tree: ParseTree | None
    heads: tuple[int, ...] | None
    dep_labels: tuple[int, ...] | None


class Forward(NamedTuple):
    lal: AttentionOutput
    padded: Tensor
    span_vecs: Tensor
    chart: SpanChart
    arc_scores: Tensor


class LALParser(Module):
    def __init__(self, config: ParserConfig, vocab: Vocab, seed: int = 0) -> None:
        super().__init__()
        if len(vocab.labels) < 2 or not vocab.dep_labels:
            raise ValueError("vocabulary needs constituency and dependency labels")
        self.config, self.vocab = config, vocab
        rng = np.random.default_rng(seed)
        self.add_module("encoder", Encoder(rng, config.encoder, vocab))
        lal = self.encoder.lal_config
        width, self.groups = lal.output_width, lal.groups
        self.add_param("start", T.uniform_init(rng, (width,), width))
        self.add_param("stop", T.uniform_init(rng, (width,), width))
        self.add_module("spans", SpanScorer(rng, width, config.span_hidden, len(vocab.labels)))
        self.add_module("deps", DependencyScorer(rng, width, config.arc_dim, config.label_dim, len(vocab.dep_labels)))

    @property
    def lal_config(self):
        return self.encoder.lal_config

    def example(self, sentence: Sentence, tree: ParseTree | None = None, arcs: DepArcs | None = None) -> Example:
        v = self.vocab
        tree_ids = tree.to_ids(v.index("labels")) if tree is not None else None
        heads = labels = None
        if arcs is not None:
            heads = arcs.heads
            ix = v.index("dep_labels")
            labels = tuple(ix[l] for l in arcs.labels)
        return Example(sentence, v.word_ids(sentence.words), v.tag_ids(sentence.tags), tree_ids, heads, labels)

    def forward(self, ex: Example, training: bool = False, rng=None) -> Forward:
        out = self.encoder(ex.word_ids, ex.tag_ids, training, rng)
        padded = pad_boundaries(out.word_reps, self.start, self.stop)
        vecs = span_vectors(padded, self.groups)
        chart = SpanChart(len(ex.word_ids), self.spans(vecs))
        return Forward(out, padded, vecs, chart, self.deps.arc_scores(out.word_reps))

    def loss(self, ex: Example, training: bool = False, rng=None) -> Tensor:
        """Constituency hinge loss plus dependency cross-entropy."""
        f = self.forward(ex, training, rng)
        constituency = hinge_loss(f.chart, ex.tree)
        label_scores = self.deps.label_scores(f.lal.word_reps, ex.heads)
        return T.add(constituency, dep_loss(f.arc_scores, label_scores, ex.heads, ex.dep_labels))

    def predict(self, ex: Example) -> tuple[ParseTree, DepArcs, Forward]:
        """Decoded tree and arcs with string labels, plus the forward pass."""
        with T.no_grad():
            f = self.forward(ex)
            tree, _ = cky_decode(f.chart)
            arcs = decode_arcs(f.arc_scores.data, self.config.arc_decoding)
            labels = self.deps.label_scores(f.lal.word_reps, arcs.heads).data.argmax(axis=1)
        names = self.vocab.dep_labels
        return tree.relabel(self.vocab.labels), DepArcs(arcs.heads, tuple(names[l] for l in labels)), f

    def parse(self, sentence: Sentence) -> tuple[ParseTree, DepArcs]:
        tree, arcs, _ = self.predict(self.example(sentence))
        return tree, arcs
