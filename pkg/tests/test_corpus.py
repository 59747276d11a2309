import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pielab import corpus
from pielab.corpus import (CorpusError, SyntheticSpec, Vocabulary, class_frequencies,
                           compute_max_tokens, encode_corpus, generate_synthetic_corpus,
                           load_corpus, save_corpus, tokenize)


def test_tokenize_examples():
    assert tokenize("Price: 42 dollars!") == ["price", "dollars"]
    assert tokenize("Don't 'quote' me_now") == ["don't", "quote", "me", "now"]
    assert tokenize("Café déjà-vu") == ["café", "déjà", "vu"]
    assert tokenize("  ") == []


@given(st.text(max_size=60))
def test_tokens_are_lowercase_letters(text):
    for tok in tokenize(text):
        assert tok == tok.lower()
        assert all(ch.isalpha() or ch == "'" for ch in tok)
        assert tok[0] != "'" and tok[-1] != "'"


@pytest.mark.parametrize("lengths, cap", [
    ([430] * 85 + [1000] * 15, 512),
    ([242] * 90 + [5] * 10, 256),
    ([1, 1, 1], 1),
    ([3], 4),
])
def test_compute_max_tokens(lengths, cap):
    assert compute_max_tokens(lengths) == cap


@given(st.lists(st.integers(0, 5000), min_size=1, max_size=50),
       st.floats(0.05, 1.0))
def test_max_tokens_is_smallest_covering_power_of_two(lengths, coverage):
    cap = compute_max_tokens(lengths, coverage)
    assert cap & (cap - 1) == 0
    arr = np.array(lengths)
    assert np.mean(arr <= cap) >= coverage
    if cap > 1:
        assert np.mean(arr <= cap // 2) < coverage


def test_vocabulary_order_and_min_freq():
    ex = [corpus.RawExample(0, "b a a c", (0,)), corpus.RawExample(1, "b a d", (0,))]
    v = Vocabulary.build(ex)
    assert list(v.token_to_id) == ["<pad>", "<oov>", "a", "b", "c", "d"]
    v2 = Vocabulary.build(ex, min_freq=2)
    assert v2.lookup(["a", "b", "c", "zzz"]) == [2, 3, 1, 1]
    assert v2.decode([2, 0, 1]) == ["a", "<oov>"]


def test_encode_truncates_and_pads(tiny_corpus):
    enc = encode_corpus(tiny_corpus, max_tokens=4)
    tr = enc.train
    assert tr.token_ids.shape == (len(tiny_corpus.train), 4)
    assert np.all(tr.lengths <= 4)
    for row, L in zip(tr.token_ids, tr.lengths):
        assert np.all(row[L:] == corpus.PAD_ID) and np.all(row[:L] != corpus.PAD_ID)
    assert np.array_equal(tr.labels.sum(axis=1), np.ones(len(tr)))


def test_oov_at_test_time(tiny_corpus):
    enc = encode_corpus(tiny_corpus, min_freq=1)
    assert np.any(enc.test.token_ids == corpus.OOV_ID)


def _write(tmp_path, lines, kind="single", classes=("a", "b", "c")):
    (tmp_path / "manifest.json").write_text(json.dumps({"classes": list(classes), "kind": kind}))
    (tmp_path / "train.jsonl").write_text("\n".join(lines) + "\n")
    (tmp_path / "validation.jsonl").write_text("")
    (tmp_path / "test.jsonl").write_text("")
    return tmp_path


@pytest.mark.parametrize("line, message", [
    ('{"id": 1, "text": "x", "labels": []}', "empty label set at line 2"),
    ('{"id": 1, "text": "x", "labels": [7]}', "out of range"),
    ('{"id": 0, "text": "x", "labels": [1]}', "duplicate id 0"),
    ('{"id": 1, "text": "x"}', "malformed record"),
    ('{"id": 1, "text": "x", "labels": [0, 1]}', "exactly one label"),
    ("not json", "malformed record"),
])
def test_corpus_validation_errors(tmp_path, line, message):
    _write(tmp_path, ['{"id": 0, "text": "ok", "labels": [0]}', line])
    with pytest.raises(CorpusError, match=message):
        load_corpus(tmp_path)


def test_multilabel_duplicate_labels_warn(tmp_path, caplog):
    _write(tmp_path, ['{"id": 0, "text": "ok", "labels": [2, 0, 2]}'], kind="multi")
    with caplog.at_level(logging.WARNING):
        c = load_corpus(tmp_path)
    assert c.train[0].labels == (0, 2)
    assert "deduplicated" in caplog.text


def test_kind_must_match_manifest(tmp_path):
    _write(tmp_path, ['{"id": 0, "text": "ok", "labels": [0]}'])
    with pytest.raises(CorpusError, match="manifest declares"):
        load_corpus(tmp_path, kind="multi")


def test_missing_manifest(tmp_path):
    with pytest.raises(CorpusError, match="manifest"):
        load_corpus(tmp_path)


def test_save_load_round_trip(tiny_corpus, tmp_path):
    save_corpus(tiny_corpus, tmp_path / "c")
    back = load_corpus(tmp_path / "c")
    assert back == tiny_corpus


def test_synthetic_is_deterministic():
    spec = SyntheticSpec(n_train=50, n_validation=10, n_test=10, seed=9)
    assert generate_synthetic_corpus(spec) == generate_synthetic_corpus(spec)
    other = generate_synthetic_corpus(SyntheticSpec(n_train=50, n_validation=10, n_test=10, seed=10))
    assert other != generate_synthetic_corpus(spec)


def test_synthetic_class_frequencies_follow_weights():
    spec = SyntheticSpec()
    c = generate_synthetic_corpus(spec)
    assert (len(c.train), len(c.validation), len(c.test)) == (2000, 400, 400)
    freq = class_frequencies(c.train, 3) / 2000
    w = np.array([1, 1 / 2, 1 / 3])
    assert np.all(np.abs(freq - w / w.sum()) <= 0.05)
    ids = [e.id for s in (c.train, c.validation, c.test) for e in s]
    assert len(set(ids)) == len(ids)


def test_synthetic_multilabel_rates():
    spec = SyntheticSpec(kind="multi", n_train=3000, n_validation=10, n_test=10, seed=1)
    c = generate_synthetic_corpus(spec)
    rates = class_frequencies(c.train, 3) / 3000
    base = np.array([0.6, 0.3, 0.2])
    # an empty draw is replaced by one class drawn in proportion to the rates
    p_empty = np.prod(1 - base)
    expected = base + p_empty * base / base.sum()
    assert np.all(np.abs(rates - expected) <= 0.05)
    assert all(len(e.labels) >= 1 for e in c.train)


def test_synthetic_spec_validation():
    with pytest.raises(ValueError):
        generate_synthetic_corpus(SyntheticSpec(n_classes=1))
    with pytest.raises(ValueError):
        generate_synthetic_corpus(SyntheticSpec(class_weights=(1.0, 2.0)))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_synthetic_labels_in_range(seed):
    c = generate_synthetic_corpus(SyntheticSpec(n_train=20, n_validation=10, n_test=10, seed=seed))
    for ex in c.train + c.test:
        assert len(ex.labels) == 1 and 0 <= ex.labels[0] < 3
        assert tokenize(ex.text)
