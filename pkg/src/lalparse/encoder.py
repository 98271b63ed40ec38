"""Token embeddings and the self-attention stack under the label attention
layer."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Iterable, Sequence

import numpy as np

from . import tensor as T
from .attention import AttentionOutput, LabelAttention, LabelAttentionConfig, SelfAttention
from .nn import Module
from .tensor import Tensor

PAD = "<pad>"
UNK = "<unk>"


class InputError(ValueError):
    """Input sentence cannot be encoded (too long, malformed)."""


@dataclass(frozen=True)
class Sentence:
    words: tuple[str, ...]
    tags: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "words", tuple(self.words))
        object.__setattr__(self, "tags", tuple(self.tags))
        if len(self.words) != len(self.tags):
            raise InputError("every word needs a POS tag")
        if not self.words:
            raise InputError("empty sentence")

    def __len__(self) -> int:
        return len(self.words)


@dataclass
class Vocab:
    """Dense id maps.  Words and tags reserve ``0`` for padding and ``1`` for
    unknown entries; constituency labels reserve ``0`` for the empty label."""

    words: list[str] = field(default_factory=lambda: [PAD, UNK])
    tags: list[str] = field(default_factory=lambda: [PAD, UNK])
    labels: list[str] = field(default_factory=lambda: [""])
    dep_labels: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._index = {name: {s: k for k, s in enumerate(getattr(self, name))} for name in ("words", "tags", "labels", "dep_labels")}

    @classmethod
    def build(cls, words: Iterable[str], tags: Iterable[str], labels: Iterable[str], dep_labels: Iterable[str]) -> "Vocab":
        return cls(
            words=[PAD, UNK] + sorted(set(words) - {PAD, UNK}),
            tags=[PAD, UNK] + sorted(set(tags) - {PAD, UNK}),
            labels=[""] + sorted(set(labels) - {""}),
            dep_labels=sorted(set(dep_labels)),
        )

    def index(self, kind: str) -> dict[str, int]:
        return self._index[kind]

    def word_ids(self, words: Sequence[str]) -> np.ndarray:
        ix = self._index["words"]
        return np.array([ix.get(w, 1) for w in words], dtype=np.int64)

    def tag_ids(self, tags: Sequence[str]) -> np.ndarray:
        ix = self._index["tags"]
        return np.array([ix.get(t, 1) for t in tags], dtype=np.int64)

    def to_dict(self) -> dict:
        return {"words": self.words, "tags": self.tags, "labels": self.labels, "dep_labels": self.dep_labels}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocab":
        return cls(list(d["words"]), list(d["tags"]), list(d["labels"]), list(d["dep_labels"]))


@dataclass
class EncoderConfig:
    num_layers: int = 3
    d_content: int = 48
    d_position: int = 16
    max_len: int = 64
    sa_heads: int = 4
    sa_d_ff: int = 128
    lal_heads: int | None = None  # None: one head per constituency label
    d_qk: int = 128
    d_v: int = 128
    d_out: int = 128
    use_pfl: bool = True
    lal_d_ff: int = 256
    residual_dropout_p: float = 0.0
    query_mode: str = "vector"
    combine_mode: str = "concat"

    def __post_init__(self) -> None:
        if self.num_layers < 0:
            raise ValueError("num_layers must be >= 0")
        if min(self.d_content, self.d_position, self.max_len) < 1:
            raise ValueError("embedding sizes and max_len must be positive")

    @property
    def d_model(self) -> int:
        return self.d_content + self.d_position

    def label_attention(self, num_labels: int) -> LabelAttentionConfig:
        heads = self.lal_heads if self.lal_heads is not None else max(num_labels - 1, 1)
        return LabelAttentionConfig(
            num_heads=heads,
            d_model=self.d_model,
            d_qk=self.d_qk,
            d_v=self.d_v,
            d_out=self.d_out,
            use_pfl=self.use_pfl,
            d_ff=self.lal_d_ff,
            residual_dropout_p=self.residual_dropout_p,
            query_mode=self.query_mode,
            combine_mode=self.combine_mode,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown encoder options: {sorted(unknown)}")
        return cls(**d)


class Encoder(Module):
    def __init__(self, rng: np.random.Generator, config: EncoderConfig, vocab: Vocab) -> None:
        super().__init__()
        self.config = config
        dc, dp = config.d_content, config.d_position
        self.add_param("word_emb", T.uniform_init(rng, (len(vocab.words), dc), dc))
        self.add_param("tag_emb", T.uniform_init(rng, (len(vocab.tags), dc), dc))
        self.add_param("pos_emb", T.uniform_init(rng, (config.max_len, dp), dp))
        self.layers = []
        for k in range(config.num_layers):
            self.layers.append(self.add_module(f"layer{k}", SelfAttention(rng, config.d_model, config.sa_heads, config.sa_d_ff)))
        self.lal_config = config.label_attention(len(vocab.labels))
        self.add_module("lal", LabelAttention(rng, self.lal_config))

    def embed(self, word_ids: np.ndarray, tag_ids: np.ndarray) -> Tensor:
        """``n x d_model`` rows ``[word + tag content ; position]``."""
        n = len(word_ids)
        if n > self.config.max_len:
            raise InputError(f"sentence of {n} words exceeds max_len={self.config.max_len}")
        content = T.add(T.take(self.word_emb, word_ids), T.take(self.tag_emb, tag_ids))
        position = T.slice_axis(self.pos_emb, 0, 0, n)
        return T.concat([content, position], axis=1)

    def __call__(self, word_ids, tag_ids, training: bool = False, rng=None) -> AttentionOutput:
        x = self.embed(word_ids, tag_ids)
        for layer in self.layers:
            x = layer(x).word_reps
        return self.lal(x, training, rng)


def encode(sentence: Sentence, encoder: Encoder, vocab: Vocab, training: bool = False, rng=None) -> AttentionOutput:
    return encoder(vocab.word_ids(sentence.words), vocab.tag_ids(sentence.tags), training, rng)
