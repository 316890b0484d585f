"""Toy modifier language.

Vocabulary (ids are fixed)::

    0 awful      valence -2
    1 bad        valence -1
    2 the        valence  0
    3 good       valence +1
    4 awesome    valence +2
    5 extremely  intensifier: doubles the valence of the next input
    6 not        negator: flips the sign of the next four inputs
    7 <pad>      valence 0, encoded as the all-zero input vector

The per-step target is the running sum of (possibly modified) valences.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

INTENSIFIER_SCOPE = 1
NEGATOR_SCOPE = 4


@dataclass(frozen=True)
class ToyToken:
    id: int
    word: str
    kind: str  # "valence" | "intensifier" | "negator" | "pad"
    valence: int = 0


@dataclass(frozen=True)
class ToyVocab:
    tokens: tuple[ToyToken, ...]

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def words(self) -> list[str]:
        return [t.word for t in self.tokens]

    def id_of(self, word: str) -> int:
        for t in self.tokens:
            if t.word == word:
                return t.id
        raise KeyError(word)

    def encode(self, words: Iterable[str]) -> list[int]:
        return [self.id_of(w) for w in words]

    def ids_of_kind(self, kind: str) -> list[int]:
        return [t.id for t in self.tokens if t.kind == kind]

    @property
    def pad_id(self) -> int:
        return self.ids_of_kind("pad")[0]

    @property
    def intensifier_id(self) -> int:
        return self.ids_of_kind("intensifier")[0]

    @property
    def negator_id(self) -> int:
        return self.ids_of_kind("negator")[0]

    @property
    def modifier_ids(self) -> list[int]:
        return [self.negator_id, self.intensifier_id]

    @property
    def valences(self) -> np.ndarray:
        return np.array([t.valence for t in self.tokens], dtype=float)


def build_toy_vocab() -> ToyVocab:
    spec = [
        ("awful", "valence", -2),
        ("bad", "valence", -1),
        ("the", "valence", 0),
        ("good", "valence", 1),
        ("awesome", "valence", 2),
        ("extremely", "intensifier", 0),
        ("not", "negator", 0),
        ("<pad>", "pad", 0),
    ]
    return ToyVocab(tuple(ToyToken(i, w, k, v) for i, (w, k, v) in enumerate(spec)))


VOCAB = build_toy_vocab()


def oracle_targets(tokens: Sequence[int], vocab: ToyVocab = VOCAB) -> list[float]:
    """Cumulative modified-valence sum after each token.

    Overlapping modifiers compose multiplicatively; modifier tokens
    contribute zero valence themselves.
    """
    n = len(vocab)
    out: list[float] = []
    total = 0
    last_intensifier = None
    negators: list[int] = []
    for t, tok in enumerate(tokens):
        if not 0 <= tok < n:
            raise ValueError(f"token id {tok} is not in the toy vocabulary")
        info = vocab.tokens[tok]
        mult = 1
        if last_intensifier is not None and t - last_intensifier <= INTENSIFIER_SCOPE:
            mult *= 2
        for s in negators:
            if t - s <= NEGATOR_SCOPE:
                mult *= -1
        total += mult * info.valence
        out.append(float(total))
        if info.kind == "intensifier":
            last_intensifier = t
        elif info.kind == "negator":
            negators = [s for s in negators if t - s < NEGATOR_SCOPE] + [t]
    return out


@dataclass
class ToyExample:
    tokens: list[int]
    targets: list[float]


@dataclass
class LabeledExample:
    tokens: list[int]
    label: int
    meta: dict = field(default_factory=dict)


def _allowed(history: Sequence[int], vocab: ToyVocab) -> list[int]:
    banned = set()
    if history and history[-1] == vocab.intensifier_id:
        banned.add(vocab.intensifier_id)
    if vocab.negator_id in history[-NEGATOR_SCOPE:]:
        banned.add(vocab.negator_id)
    return [t.id for t in vocab.tokens if t.id not in banned]


def sample_tokens(rng: np.random.Generator, length: int, vocab: ToyVocab = VOCAB) -> list[int]:
    """Uniform draw at each position over the tokens the placement rules allow."""
    tokens: list[int] = []
    for _ in range(length):
        choices = _allowed(tokens, vocab)
        tokens.append(choices[int(rng.integers(len(choices)))])
    return tokens


def generate_example(rng_seed: int, length: int = 50, vocab: ToyVocab = VOCAB) -> ToyExample:
    if length < 1:
        raise ValueError("length must be >= 1")
    rng = np.random.default_rng(rng_seed)
    tokens = sample_tokens(rng, length, vocab)
    return ToyExample(tokens, oracle_targets(tokens, vocab))


def generate_toy_corpus(rng_seed: int, n_examples: int, length: int = 50,
                        vocab: ToyVocab = VOCAB) -> list[ToyExample]:
    seeds = np.random.SeedSequence(rng_seed).spawn(n_examples)
    out = []
    for ss in seeds:
        tokens = sample_tokens(np.random.default_rng(ss), length, vocab)
        out.append(ToyExample(tokens, oracle_targets(tokens, vocab)))
    return out


def generate_classification_corpus(rng_seed: int, n_examples: int, length: int = 50,
                                   vocab: ToyVocab = VOCAB) -> list[LabeledExample]:
    """Binary labels from the sign of the final oracle target; zero-sum draws are redrawn."""
    if n_examples < 1:
        raise ValueError("n_examples must be >= 1")
    seeds = np.random.SeedSequence(rng_seed).spawn(n_examples)
    out = []
    for ss in seeds:
        rng = np.random.default_rng(ss)
        while True:
            tokens = sample_tokens(rng, length, vocab)
            final = oracle_targets(tokens, vocab)[-1]
            if final != 0:
                break
        out.append(LabeledExample(tokens, int(final > 0), {"final_target": final}))
    return out


def check_constraints(tokens: Sequence[int], vocab: ToyVocab = VOCAB) -> bool:
    """True if no negator follows a negator within its scope and no intensifier repeats."""
    for t, tok in enumerate(tokens):
        if tok == vocab.intensifier_id and t > 0 and tokens[t - 1] == vocab.intensifier_id:
            return False
        if tok == vocab.negator_id and vocab.negator_id in tokens[max(0, t - NEGATOR_SCOPE):t]:
            return False
    return True


# Corpus files are JSON lines: {"tokens": [...], "targets": [...]} for per-step
# regression data, {"tokens": [...], "label": 0|1} for classification data.

def write_corpus(path: str | Path, examples: Sequence[ToyExample | LabeledExample]) -> None:
    with open(path, "w") as f:
        for ex in examples:
            if isinstance(ex, ToyExample):
                rec = {"tokens": list(ex.tokens), "targets": list(ex.targets)}
            else:
                rec = {"tokens": list(ex.tokens), "label": int(ex.label)}
            f.write(json.dumps(rec) + "\n")


def read_corpus(path: str | Path) -> list[ToyExample | LabeledExample]:
    out: list[ToyExample | LabeledExample] = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if "targets" in rec:
                if len(rec["targets"]) != len(rec["tokens"]):
                    raise ValueError(f"{path}:{lineno}: tokens/targets length mismatch")
                out.append(ToyExample([int(t) for t in rec["tokens"]], [float(v) for v in rec["targets"]]))
            elif "label" in rec:
                out.append(LabeledExample([int(t) for t in rec["tokens"]], int(rec["label"])))
            else:
                raise ValueError(f"{path}:{lineno}: record has neither 'targets' nor 'label'")
    return out
