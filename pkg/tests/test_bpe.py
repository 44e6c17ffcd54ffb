import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from suggestlab import bpe
from suggestlab.errors import ContractError


def test_train_single_pair_corpus():
    vocab = bpe.train_bpe(b"a" * 400, 259)
    assert vocab.size == 259
    assert vocab.merges[0] == (ord("a"), ord("a"))


def test_train_byte_fallback_no_merges():
    vocab = bpe.train_bpe(b"arbitrary bytes \x00\xff", 258)
    assert vocab.size == 258
    assert vocab.merges == []
    assert bpe.encode("hi", vocab) == [ord("h"), ord("i")]


def test_train_ab_merge():
    # pair-count oracle: (a,b) occurs most often in "ababab..."
    vocab = bpe.train_bpe(b"ababab" * 1000, 260)
    assert (ord("a"), ord("b")) in vocab.merges


def test_train_empty_corpus():
    with pytest.raises(ContractError):
        bpe.train_bpe(b"", 300)


def test_train_vocab_too_small():
    with pytest.raises(ContractError):
        bpe.train_bpe(b"abc", 257)


def test_train_exhaustion():
    with pytest.raises(ContractError):
        bpe.train_bpe(b"ab", 400)


@pytest.fixture(scope="module")
def vocab():
    rng = np.random.default_rng(11)
    syll = ["ba", "re", "ca", "lo", "mi", "tu", "zen", "pa", "ko", "sha"]
    words = ["".join(rng.choice(syll) for _ in range(int(rng.integers(2, 4)))) for _ in range(300)]
    corpus = " ".join(rng.choice(words) for _ in range(6000))
    return bpe.train_bpe(corpus, 300)


def test_roundtrip_text(vocab):
    for s in ["hello", "", "balance refund balance", "<CUSTOMER>: hi\n<ADVOCATE>: yes"]:
        assert bpe.decode(bpe.encode(s, vocab), vocab) == s


def test_roundtrip_random_bytes(vocab):
    rng = np.random.default_rng(5)
    for _ in range(10_000):
        n = int(rng.integers(0, 40))
        raw = bytes(rng.integers(0, 256, size=n, dtype=np.uint8))
        assert bpe.decode_bytes(bpe.encode(raw, vocab), vocab) == raw


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=64))
def test_roundtrip_property(s):
    voc = _tiny_vocab()
    assert bpe.decode_bytes(bpe.encode(s, voc), voc) == s


_TINY = {}


def _tiny_vocab():
    if "v" not in _TINY:
        _TINY["v"] = bpe.train_bpe(b"the cat sat on the mat " * 50, 266)
    return _TINY["v"]


def test_encode_empty(vocab):
    assert bpe.encode("", vocab) == []


def test_specials_never_produced(vocab):
    ids = bpe.encode(bpe.EOT_TEXT + " and " + bpe.PAD_TEXT, vocab)
    assert bpe.EOT_ID not in ids
    assert bpe.PAD_ID not in ids
    assert bpe.decode(ids, vocab) == bpe.EOT_TEXT + " and " + bpe.PAD_TEXT


def test_encode_deterministic_and_batch_independent(vocab):
    text = "hello balance refund hello thanks"
    a = bpe.encode(text, vocab)
    b = bpe.encode(text, vocab)
    assert a == b
    # encoding word-sized pieces and concatenating matches the whole string
    pieces = ["hello ", "balance ", "refund ", "hello ", "thanks"]
    concat = [i for p in pieces for i in bpe.encode(p, vocab)]
    assert concat == a


def test_decode_unknown_id(vocab):
    with pytest.raises(ContractError):
        bpe.decode([vocab.size + 5], vocab)


def test_ids_dense(vocab):
    ids = sorted(set(vocab.token_to_id.values()) | {bpe.EOT_ID, bpe.PAD_ID})
    assert ids == list(range(vocab.size))


def test_save_load_identical_encoding(tmp_path, vocab):
    path = tmp_path / "vocab.txt"
    bpe.save_vocab(vocab, path)
    loaded = bpe.load_vocab(path)
    assert loaded.merges == vocab.merges
    for s in ["hello thanks", "refund balance card"]:
        assert bpe.encode(s, loaded) == bpe.encode(s, vocab)


def test_load_rejects_garbage(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("not a vocab\n")
    with pytest.raises(ContractError):
        bpe.load_vocab(p)
