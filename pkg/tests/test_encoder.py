import numpy as np
import pytest

from lalparse import tensor as T
from lalparse.encoder import Encoder, EncoderConfig, InputError, Sentence, Vocab, encode

from conftest import small_encoder


@pytest.fixture()
def vocab():
    return Vocab.build(["the", "cat", "sat"], ["D", "N", "V"], ["S", "NP", "VP"], ["det", "nsubj", "root"])


def build(vocab, seed=0, **kw):
    return Encoder(np.random.default_rng(seed), small_encoder(**kw), vocab)


class TestVocab:
    def test_reserved_ids(self, vocab):
        assert vocab.words[:2] == ["<pad>", "<unk>"] and vocab.labels[0] == ""

    def test_unknown_maps_to_one(self, vocab):
        assert vocab.word_ids(["the", "zebra"]).tolist() == [vocab.index("words")["the"], 1]
        assert vocab.tag_ids(["XX"]).tolist() == [1]

    def test_round_trip(self, vocab):
        assert Vocab.from_dict(vocab.to_dict()) == vocab

    def test_ids_dense(self, vocab):
        for kind in ("words", "tags", "labels", "dep_labels"):
            assert sorted(vocab.index(kind).values()) == list(range(len(getattr(vocab, kind))))


class TestSentence:
    def test_tag_count_must_match(self):
        with pytest.raises(InputError):
            Sentence(["a", "b"], ["D"])

    def test_empty(self):
        with pytest.raises(InputError):
            Sentence([], [])


class TestEmbed:
    def test_identical_tokens(self, vocab):
        enc = build(vocab)
        ids = vocab.word_ids(["cat", "cat"])
        x = enc.embed(ids, vocab.tag_ids(["N", "N"])).data
        assert np.array_equal(x[0, :12], x[1, :12])
        assert not np.array_equal(x[0, 12:], x[1, 12:])

    def test_zero_tables(self, vocab):
        enc = build(vocab)
        enc.word_emb.data[:] = 0.0
        enc.tag_emb.data[:] = 0.0
        x = enc.embed(vocab.word_ids(["the", "cat"]), vocab.tag_ids(["D", "N"])).data
        assert not x[:, :12].any()

    def test_too_long(self, vocab):
        enc = build(vocab, max_len=3)
        with pytest.raises(InputError):
            enc.embed(np.ones(4, dtype=np.int64), np.ones(4, dtype=np.int64))

    def test_unused_rows_get_no_gradient(self, vocab):
        enc = build(vocab)
        ids = vocab.word_ids(["the", "the", "sat"])
        T.tsum(T.mul(enc(ids, vocab.tag_ids(["D", "D", "V"])).word_reps, 1.3)).backward()
        used = set(ids.tolist())
        for row in range(len(vocab.words)):
            assert (np.abs(enc.word_emb.grad[row]).sum() > 0) == (row in used)


class TestEncode:
    def test_zero_layers(self, vocab):
        enc = build(vocab, num_layers=0)
        w, t = vocab.word_ids(["the", "cat"]), vocab.tag_ids(["D", "N"])
        direct = enc.lal(enc.embed(w, t)).word_reps.data
        assert np.array_equal(enc(w, t).word_reps.data, direct)

    @pytest.mark.parametrize("layers", [0, 1, 3])
    def test_output_width(self, vocab, layers):
        enc = build(vocab, num_layers=layers)
        out = encode(Sentence(["the", "cat", "sat"], ["D", "N", "V"]), enc, vocab)
        assert out.word_reps.shape == (3, 3 * 4)

    def test_default_heads_per_label(self, vocab):
        enc = Encoder(np.random.default_rng(0), EncoderConfig(d_qk=4, d_v=4, d_out=4, lal_d_ff=8, sa_d_ff=8), vocab)
        assert enc.lal_config.num_heads == len(vocab.labels) - 1

    def test_deterministic(self, vocab):
        enc = build(vocab)
        s = Sentence(["the", "cat", "sat"], ["D", "N", "V"])
        assert np.array_equal(encode(s, enc, vocab).word_reps.data, encode(s, enc, vocab).word_reps.data)

    def test_position_signal_is_live(self, vocab):
        enc = build(vocab)
        w, t = vocab.word_ids(["cat", "cat"]), vocab.tag_ids(["N", "N"])
        before = enc(w, t).word_reps.data.copy()
        enc.pos_emb.data[[0, 1]] = enc.pos_emb.data[[1, 0]]
        after = enc(w, t).word_reps.data
        assert not np.array_equal(before, after)
        np.testing.assert_allclose(before[[1, 0]], after, rtol=1e-12, atol=1e-12)

    def test_gradients_two_layers(self, vocab):
        enc = build(vocab, num_layers=2, use_pfl=True)
        w, t = vocab.word_ids(["the", "cat", "sat"]), vocab.tag_ids(["D", "N", "V"])
        weights = np.random.default_rng(5).normal(size=(3, 12))
        errs = T.check_gradients(lambda: T.tsum(T.mul(enc(w, t).word_reps, weights)), enc.parameters())
        assert max(errs) <= 1e-4

    def test_unknown_option_rejected(self):
        with pytest.raises(ValueError):
            EncoderConfig.from_dict({"layers": 2})
