import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from lalparse.attention import LabelAttentionConfig
from lalparse.data import Treebank
from lalparse.encoder import Sentence
from lalparse.interpret import (
    HeadTrace,
    aggregate_stats,
    attention_trace,
    check_interpretable,
    head_contributions,
    inspect_treebank,
    read_traces,
    word_traces,
)
from lalparse.model import LALParser
from lalparse.tensor import ContractError

from conftest import small_parser


def trace(top, H=4, predicted="NP", gold=None):
    c = np.full(H, 0.1 / (H - 1))
    c[top] = 0.9
    return HeadTrace(c.tolist(), [[1.0]] * H, predicted, gold)


class TestHeadContributions:
    def test_one_hot(self):
        v = np.zeros(12)
        v[6:9] = [1.0, -2.0, 0.5]
        assert head_contributions(v, 4).tolist() == [0.0, 0.0, 1.0, 0.0]

    def test_identical_slices_uniform(self):
        v = np.tile([0.3, -1.2, 2.0], 5)
        for mode in ("l1_average", "softmax"):
            assert head_contributions(v, 5, mode).tolist() == [0.2] * 5

    def test_zero_vector_uniform(self):
        assert head_contributions(np.zeros(6), 3).tolist() == [1 / 3] * 3

    def test_hand_ratios(self):
        v = np.array([1.0, -1.0, 3.0, 0.0, -0.5, 0.5])
        np.testing.assert_allclose(head_contributions(v, 3), [2 / 6, 3 / 6, 1 / 6], rtol=1e-15)

    def test_softmax_mode(self):
        v = np.array([1.0, -1.0, 3.0, 0.0])
        e = np.exp([1.0, 1.5])
        np.testing.assert_allclose(head_contributions(v, 2, "softmax"), e / e.sum(), rtol=1e-15)

    def test_width_must_split(self):
        with pytest.raises(ValueError):
            head_contributions(np.zeros(7), 3)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            head_contributions(np.zeros(6), 3, "max")

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 5), st.sampled_from(["l1_average", "softmax"]), st.data())
    def test_simplex(self, H, w, mode, data):
        v = data.draw(arrays(np.float64, H * w, elements=st.floats(-1e3, 1e3)))
        c = head_contributions(v, H, mode)
        assert np.all(c >= 0) and abs(c.sum() - 1.0) <= 1e-12

    def test_scaling_one_head_increases_its_share(self):
        rng = np.random.default_rng(0)
        v = rng.normal(size=12)
        base = head_contributions(v, 3)
        for t in (1.5, 3.0):
            w = v.copy()
            w[4:8] *= t
            assert head_contributions(w, 3)[1] > base[1]

    def test_pfl_contract(self):
        with pytest.raises(ContractError, match="feed-forward"):
            check_interpretable(LabelAttentionConfig(num_heads=2, d_model=4, use_pfl=True))
        with pytest.raises(ContractError):
            check_interpretable(LabelAttentionConfig(num_heads=2, d_model=4, use_pfl=False, combine_mode="project"))


class TestTraces:
    def test_single_word_attention(self, toy_small):
        model = LALParser(small_parser(), toy_small.vocab, seed=0)
        traces = attention_trace(Sentence(["cat"], ["N"]), model)
        assert traces and all(row == [1.0] for t in traces for row in t.attention)

    def test_rows_sum_to_one_and_cover_spans(self, toy_small):
        model = LALParser(small_parser(), toy_small.vocab, seed=0)
        it = toy_small.items[0]
        traces = attention_trace(it.sentence, model, it.tree)
        pred, _ = model.parse(it.sentence)
        spans = {t.span for t in traces}
        assert {(i, j) for i, j, _ in pred.labeled()} | {(i, j) for i, j, _ in it.tree.labeled()} == spans
        for t in traces:
            np.testing.assert_allclose(np.sum(t.attention, axis=1), 1.0, rtol=0, atol=1e-12)
            assert abs(sum(t.contributions) - 1.0) <= 1e-12

    def test_contributions_recomputed_from_span_vectors(self, toy_small):
        from lalparse.constituency import span_vector

        model = LALParser(small_parser(), toy_small.vocab, seed=0)
        it = toy_small.items[1]
        _, _, f = model.predict(model.example(it.sentence))
        for t in attention_trace(it.sentence, model):
            vec = span_vector(f.padded, *t.span, model.groups).data
            assert t.contributions == head_contributions(vec, 3).tolist()

    def test_pfl_model_rejected(self, toy_small):
        model = LALParser(small_parser(use_pfl=True), toy_small.vocab, seed=0)
        with pytest.raises(ContractError):
            attention_trace(toy_small.items[0].sentence, model)

    def test_word_traces(self, toy_small):
        model = LALParser(small_parser(), toy_small.vocab, seed=0)
        s = toy_small.items[0].sentence
        traces = word_traces(s, model)
        assert [t.word for t in traces] == list(range(len(s)))

    def test_json_round_trip(self):
        t = HeadTrace([0.5, 0.5], [[1.0], [1.0]], "NP", "VP", span=(0, 1), sentence=3, words=["x"])
        assert HeadTrace.from_json(t.to_json()) == t


class TestAggregate:
    def test_single_span(self):
        stats = aggregate_stats([trace(2)])
        assert stats.top_head_freq["NP"] == [0.0, 0.0, 1.0, 0.0]

    def test_frequencies_sum_to_one(self):
        rng = np.random.default_rng(0)
        traces = [trace(int(rng.integers(4)), predicted=rng.choice(["NP", "VP", "S"])) for _ in range(200)]
        stats = aggregate_stats(traces)
        for freq in stats.top_head_freq.values():
            assert abs(sum(freq) - 1.0) <= 1e-12

    def test_planted_frequencies(self):
        rng = np.random.default_rng(1)
        plant = {"NP": [0.6, 0.2, 0.1, 0.1], "VP": [0.05, 0.05, 0.1, 0.8]}
        traces = [trace(int(rng.choice(4, p=p)), predicted=label) for label, p in plant.items() for _ in range(3000)]
        stats = aggregate_stats(traces)
        for label, p in plant.items():
            np.testing.assert_allclose(stats.top_head_freq[label], p, atol=0.02)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(2)
        traces = []
        for _ in range(300):
            c = rng.dirichlet(np.ones(5))
            traces.append(HeadTrace(c.tolist(), [], str(rng.choice(["A", "B"])), str(rng.choice(["A", "B", "C"]))))
        a = aggregate_stats(traces)
        b = aggregate_stats([traces[k] for k in rng.permutation(300)])
        assert a == b

    def test_confusion_grouped_by_gold(self):
        traces = [trace(1, predicted="NP", gold="VP"), trace(3, predicted="NP", gold="VP"), trace(0, predicted="NP", gold="NP")]
        stats = aggregate_stats(traces)
        assert stats.confusion == {"VP": [0.0, 0.5, 0.0, 0.5]}

    def test_empty_input(self):
        with pytest.raises(ContractError):
            aggregate_stats([])


class TestFiles:
    def test_inspect_writes_outputs(self, toy_small, tmp_path):
        model = LALParser(small_parser(), toy_small.vocab, seed=0)
        sub = Treebank(toy_small.items[:4], toy_small.vocab)
        stats = inspect_treebank(model, sub, tmp_path)
        traces = read_traces(tmp_path / "traces.jsonl")
        assert traces and aggregate_stats(traces, "l1_average") == stats
        with open(tmp_path / "head_stats.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0]) == ["label", "head", "frequency", "mean_contribution"]
        assert len(rows) == len(stats.counts) * 3
        summary = json.loads((tmp_path / "head_stats.json").read_text())
        assert set(summary["top_heads"]) == set(stats.counts)
