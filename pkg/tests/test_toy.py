import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from contextual_rnn import toy
from oracles import brute_force_targets

V = toy.VOCAB


def enc(*words):
    return V.encode(words)


def test_vocab_layout():
    v = toy.build_toy_vocab()
    assert len(v) == 8
    assert sorted(t.valence for t in v.tokens if t.kind == "valence") == [-2, -1, 0, 1, 2]
    assert v.tokens[v.pad_id].valence == 0
    assert len(v.ids_of_kind("intensifier")) == 1 and len(v.ids_of_kind("negator")) == 1
    assert toy.build_toy_vocab() == v


@pytest.mark.parametrize("words,expected", [
    (("good",), [1.0]),
    (("extremely", "good"), [0.0, 2.0]),
    (("not", "the", "the", "the", "good"), [0.0, 0.0, 0.0, 0.0, -1.0]),
    (("not", "the", "the", "the", "the", "good"), [0.0] * 5 + [1.0]),
    (("extremely", "the", "good"), [0.0, 0.0, 1.0]),
    (("not", "extremely", "good"), [0.0, 0.0, -2.0]),
    (("extremely", "not", "good"), [0.0, 0.0, -1.0]),
    ((), []),
])
def test_oracle_examples(words, expected):
    assert toy.oracle_targets(enc(*words)) == expected


def test_oracle_rejects_unknown_ids():
    with pytest.raises(ValueError):
        toy.oracle_targets([0, 8])
    with pytest.raises(ValueError):
        toy.oracle_targets([-1])


def test_oracle_matches_brute_force_exhaustively_length_4():
    for L in range(5):
        for seq in itertools.product(range(8), repeat=L):
            assert toy.oracle_targets(seq) == brute_force_targets(seq)


@given(st.lists(st.integers(0, 7), max_size=60))
def test_oracle_matches_brute_force_random(seq):
    assert toy.oracle_targets(seq) == brute_force_targets(seq)


@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 80))
def test_generated_examples_satisfy_constraints(seed, length):
    ex = toy.generate_example(seed, length)
    assert len(ex.tokens) == len(ex.targets) == length
    assert toy.check_constraints(ex.tokens)
    assert ex.targets == toy.oracle_targets(ex.tokens)
    steps = np.diff([0.0] + ex.targets)
    assert set(steps) <= {-4, -2, -1, 0, 1, 2, 4}


def test_constraint_checker_flags_violations():
    assert not toy.check_constraints(enc("not", "good", "not"))
    assert not toy.check_constraints(enc("extremely", "extremely", "good"))
    assert toy.check_constraints(enc("not", "the", "the", "the", "the", "not"))
    assert toy.check_constraints(enc("extremely", "good", "extremely"))


def test_generation_is_deterministic():
    assert toy.generate_example(0, 50) == toy.generate_example(0, 50)
    a = toy.generate_toy_corpus(3, 5, 20)
    b = toy.generate_toy_corpus(3, 5, 20)
    assert [e.tokens for e in a] == [e.tokens for e in b]
    assert len(toy.generate_example(1, 1).tokens) == 1


def test_classification_corpus():
    c = toy.generate_classification_corpus(0, 1000, 50)
    assert len(c) == 1000
    finals = [toy.oracle_targets(e.tokens)[-1] for e in c]
    assert all(f != 0 for f in finals)
    assert all(e.label == (f > 0) for e, f in zip(c, finals))
    frac = np.mean([e.label for e in c])
    assert 0.45 <= frac <= 0.55
    again = toy.generate_classification_corpus(0, 1000, 50)
    assert [e.tokens for e in again] == [e.tokens for e in c]


def test_corpus_roundtrip(tmp_path):
    c = toy.generate_toy_corpus(0, 4, 10)
    toy.write_corpus(tmp_path / "c.jsonl", c)
    back = toy.read_corpus(tmp_path / "c.jsonl")
    assert [e.tokens for e in back] == [e.tokens for e in c]
    assert [e.targets for e in back] == [e.targets for e in c]
    lab = toy.generate_classification_corpus(0, 4, 10)
    toy.write_corpus(tmp_path / "l.jsonl", lab)
    assert [e.label for e in toy.read_corpus(tmp_path / "l.jsonl")] == [e.label for e in lab]
