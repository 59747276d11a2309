"""Corpus loading, tokenisation and fixed-length encoding.

A corpus on disk is a directory holding ``manifest.json`` plus
``train.jsonl``, ``validation.jsonl`` and ``test.jsonl``. Records look like
``{"id": 3, "text": "...", "labels": [0, 2]}``.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

PAD_ID = 0
OOV_ID = 1
PAD_TOKEN = "<pad>"
OOV_TOKEN = "<oov>"

SPLITS = ("train", "validation", "test")
KINDS = ("single", "multi")


class CorpusError(ValueError):
    """Malformed corpus file or record."""


@dataclass(frozen=True)
class RawExample:
    id: int
    text: str
    labels: tuple[int, ...]


@dataclass(frozen=True)
class LabelSpace:
    class_names: tuple[str, ...]
    kind: str = "single"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"label kind must be one of {KINDS}, got {self.kind!r}")
        if len(self.class_names) < 1:
            raise ValueError("label space needs at least one class")

    @property
    def num_classes(self) -> int:
        return len(self.class_names)


@dataclass(frozen=True)
class CorpusSplits:
    train: tuple[RawExample, ...]
    validation: tuple[RawExample, ...]
    test: tuple[RawExample, ...]
    label_space: LabelSpace
    max_tokens_override: int | None = None

    def split(self, name: str) -> tuple[RawExample, ...]:
        if name not in SPLITS:
            raise KeyError(name)
        return getattr(self, name)


# --------------------------------------------------------------------------
# tokenisation

_EDGE_APOS = re.compile(r"(?<![^\W\d_])'|'(?![^\W\d_])")


def tokenize(text: str) -> list[str]:
    """Lowercase, drop everything but letters and word-internal apostrophes.

    >>> tokenize("Price: 42 dollars!")
    ['price', 'dollars']
    >>> tokenize("Don't panic")
    ["don't", 'panic']
    """
    cleaned = "".join(ch if ch.isalpha() or ch == "'" else " " for ch in text.lower())
    cleaned = _EDGE_APOS.sub(" ", cleaned)
    return cleaned.split()


def compute_max_tokens(lengths: Sequence[int], coverage: float = 0.85) -> int:
    """Smallest power of two covering at least ``coverage`` of the lengths."""
    if len(lengths) == 0:
        raise ValueError("compute_max_tokens needs at least one length")
    if not 0.0 < coverage <= 1.0:
        raise ValueError(f"coverage must be in (0, 1], got {coverage}")
    arr = np.asarray(lengths, dtype=np.int64)
    cap = 1
    while np.count_nonzero(arr <= cap) / arr.size < coverage:
        cap *= 2
    return cap


# --------------------------------------------------------------------------
# vocabulary and encoding


@dataclass
class Vocabulary:
    token_to_id: dict[str, int]
    frequencies: dict[str, int]

    @classmethod
    def build(cls, examples: Iterable[RawExample], min_freq: int = 1,
              max_size: int | None = None) -> "Vocabulary":
        """Vocabulary over ``examples`` (the train split), ordered by
        descending frequency then token."""
        counts: Counter[str] = Counter()
        for ex in examples:
            counts.update(tokenize(ex.text))
        kept = sorted((t for t, c in counts.items() if c >= min_freq),
                      key=lambda t: (-counts[t], t))
        if max_size is not None:
            kept = kept[: max(0, max_size - 2)]
        token_to_id = {PAD_TOKEN: PAD_ID, OOV_TOKEN: OOV_ID}
        for tok in kept:
            token_to_id[tok] = len(token_to_id)
        return cls(token_to_id, {t: counts[t] for t in kept})

    def __len__(self) -> int:
        return len(self.token_to_id)

    @property
    def size(self) -> int:
        return len(self.token_to_id)

    def lookup(self, tokens: Sequence[str]) -> list[int]:
        get = self.token_to_id.get
        return [get(t, OOV_ID) for t in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        inverse = self._inverse()
        return [inverse[i] for i in ids if i != PAD_ID]

    def _inverse(self) -> list[str]:
        inv = [""] * len(self.token_to_id)
        for tok, i in self.token_to_id.items():
            inv[i] = tok
        return inv


@dataclass(frozen=True)
class EncodedExample:
    token_ids: np.ndarray
    true_length: int
    label_vector: np.ndarray


@dataclass
class EncodedSplit:
    """Row-stacked encoded examples; the form the models consume."""

    example_ids: np.ndarray  # (n,) int64
    token_ids: np.ndarray  # (n, max_tokens) int32
    lengths: np.ndarray  # (n,) int32
    labels: np.ndarray  # (n, C) float32
    kind: str = "single"

    def __len__(self) -> int:
        return int(self.example_ids.shape[0])

    def subset(self, rows) -> "EncodedSplit":
        rows = np.asarray(rows)
        return EncodedSplit(self.example_ids[rows], self.token_ids[rows],
                            self.lengths[rows], self.labels[rows], self.kind)

    @property
    def gold(self) -> np.ndarray:
        """Class index per row for single-label splits."""
        return np.argmax(self.labels, axis=1)


def label_vector(labels: Sequence[int], label_space: LabelSpace) -> np.ndarray:
    vec = np.zeros(label_space.num_classes, dtype=np.float32)
    vec[list(labels)] = 1.0
    return vec


def encode(example: RawExample, vocab: Vocabulary, max_tokens: int,
           label_space: LabelSpace) -> EncodedExample:
    ids = vocab.lookup(tokenize(example.text))[:max_tokens]
    token_ids = np.full(max_tokens, PAD_ID, dtype=np.int32)
    token_ids[: len(ids)] = ids
    return EncodedExample(token_ids, len(ids), label_vector(example.labels, label_space))


def encode_split(examples: Sequence[RawExample], vocab: Vocabulary, max_tokens: int,
                 label_space: LabelSpace) -> EncodedSplit:
    n = len(examples)
    token_ids = np.full((n, max_tokens), PAD_ID, dtype=np.int32)
    lengths = np.zeros(n, dtype=np.int32)
    labels = np.zeros((n, label_space.num_classes), dtype=np.float32)
    for row, ex in enumerate(examples):
        enc = encode(ex, vocab, max_tokens, label_space)
        token_ids[row] = enc.token_ids
        lengths[row] = enc.true_length
        labels[row] = enc.label_vector
    ids = np.array([ex.id for ex in examples], dtype=np.int64)
    return EncodedSplit(ids, token_ids, lengths, labels, label_space.kind)


@dataclass
class EncodedCorpus:
    vocab: Vocabulary
    max_tokens: int
    label_space: LabelSpace
    train: EncodedSplit
    validation: EncodedSplit
    test: EncodedSplit

    def split(self, name: str) -> EncodedSplit:
        return getattr(self, name)


def encode_corpus(corpus: CorpusSplits, coverage: float = 0.85, min_freq: int = 1,
                  max_tokens: int | None = None) -> EncodedCorpus:
    """Build the train vocabulary, choose ``max_tokens`` on train and encode
    every split. An explicit ``max_tokens`` or the manifest override wins."""
    vocab = Vocabulary.build(corpus.train, min_freq=min_freq)
    if max_tokens is None:
        max_tokens = corpus.max_tokens_override
    if max_tokens is None:
        max_tokens = compute_max_tokens([len(tokenize(ex.text)) for ex in corpus.train],
                                        coverage)
    ls = corpus.label_space
    return EncodedCorpus(
        vocab, max_tokens, ls,
        encode_split(corpus.train, vocab, max_tokens, ls),
        encode_split(corpus.validation, vocab, max_tokens, ls),
        encode_split(corpus.test, vocab, max_tokens, ls),
    )


# --------------------------------------------------------------------------
# disk layout


def _read_split(path: Path, label_space: LabelSpace, seen: dict[int, str]) -> tuple[RawExample, ...]:
    if not path.exists():
        raise CorpusError(f"missing corpus file {path}")
    out = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path.name} line {lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"malformed record at {where}: {exc.msg}") from None
            if not isinstance(rec, dict) or not {"id", "text", "labels"} <= rec.keys():
                raise CorpusError(f"malformed record at {where}: needs id, text, labels")
            ex_id, text, labels = rec["id"], rec["text"], rec["labels"]
            if not isinstance(ex_id, int) or isinstance(ex_id, bool) or ex_id < 0:
                raise CorpusError(f"id must be a non-negative integer at {where}")
            if not isinstance(text, str):
                raise CorpusError(f"text must be a string at {where}")
            if not isinstance(labels, list) or not all(
                    isinstance(c, int) and not isinstance(c, bool) for c in labels):
                raise CorpusError(f"labels must be a list of integers at {where}")
            if not labels:
                raise CorpusError(f"empty label set at line {lineno} of {path.name}")
            for c in labels:
                if not 0 <= c < label_space.num_classes:
                    raise CorpusError(f"label index {c} out of range at {where}")
            if label_space.kind == "single" and len(labels) != 1:
                raise CorpusError(f"single-label corpus needs exactly one label at {where}")
            uniq = tuple(sorted(set(labels)))
            if len(uniq) != len(labels):
                log.warning("duplicate labels %s deduplicated at %s", labels, where)
            if ex_id in seen:
                raise CorpusError(f"duplicate id {ex_id} at {where} (first seen in {seen[ex_id]})")
            seen[ex_id] = where
            out.append(RawExample(ex_id, text, uniq))
    return tuple(out)


def load_corpus(path: str | Path, kind: str | None = None) -> CorpusSplits:
    """Load a corpus directory. ``kind`` must agree with the manifest if given."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise CorpusError(f"missing corpus manifest {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    manifest_kind = manifest.get("kind", "single")
    if kind is not None and kind != manifest_kind:
        raise CorpusError(f"requested kind {kind!r} but manifest declares {manifest_kind!r}")
    label_space = LabelSpace(tuple(manifest["classes"]), manifest_kind)
    seen: dict[int, str] = {}
    splits = [_read_split(root / f"{name}.jsonl", label_space, seen) for name in SPLITS]
    return CorpusSplits(*splits, label_space=label_space,
                        max_tokens_override=manifest.get("max_tokens_override"))


def save_corpus(corpus: CorpusSplits, path: str | Path) -> Path:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {"classes": list(corpus.label_space.class_names),
                "kind": corpus.label_space.kind}
    if corpus.max_tokens_override is not None:
        manifest["max_tokens_override"] = corpus.max_tokens_override
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    for name in SPLITS:
        with (root / f"{name}.jsonl").open("w", encoding="utf-8", newline="\n") as fh:
            for ex in corpus.split(name):
                fh.write(json.dumps({"id": ex.id, "text": ex.text, "labels": list(ex.labels)},
                                    ensure_ascii=False) + "\n")
    return root


# --------------------------------------------------------------------------
# synthetic corpora


@dataclass(frozen=True)
class SyntheticSpec:
    """Knobs for :func:`generate_synthetic_corpus`.

    Easy examples are short and carry many class-indicative words; hard ones
    are longer, carry few indicative words (some borrowed from other classes)
    and many rare tokens. Rare tokens are freshly minted 3-5 syllable
    pseudo-words, so nearly all of them end up out of vocabulary.
    """

    n_classes: int = 3
    n_train: int = 2000
    n_validation: int = 400
    n_test: int = 400
    seed: int = 0
    kind: str = "single"
    class_weights: tuple[float, ...] | None = None
    hard_fraction: float = 0.25
    label_noise: float = 0.0
    signal_words_per_class: int = 12
    mean_length: int = 30
    hard_length_factor: float = 2.0
    signal_rate: float = 0.3
    hard_signal_rate: float = 0.08
    hard_confusion: float = 0.4
    rare_rate: float = 0.02
    hard_rare_rate: float = 0.3
    common_words: int = 1000

    def validate(self) -> None:
        if self.n_classes < 2:
            raise ValueError("synthetic corpus needs at least 2 classes")
        if min(self.n_train, self.n_validation, self.n_test) < 10:
            raise ValueError("synthetic corpus needs at least 10 examples per split")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        for name in ("hard_fraction", "label_noise", "signal_rate", "hard_signal_rate",
                     "hard_confusion", "rare_rate", "hard_rare_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be within [0, 1], got {v}")
        if self.signal_rate + self.rare_rate > 1 or self.hard_signal_rate + self.hard_rare_rate > 1:
            raise ValueError("token rates sum beyond 1")
        if self.common_words < 1:
            raise ValueError("common_words must be >= 1")
        if self.mean_length < 2 or self.hard_length_factor < 1.0:
            raise ValueError("mean_length >= 2 and hard_length_factor >= 1 required")
        if self.class_weights is not None:
            w = self.class_weights
            if len(w) != self.n_classes or min(w) <= 0:
                raise ValueError("class_weights needs one positive weight per class")

    def weights(self) -> np.ndarray:
        """Normalised class frequencies (single-label) or per-class label
        rates (multi-label). Default skew is proportional to 1/(c+1)."""
        if self.class_weights is not None:
            w = np.asarray(self.class_weights, dtype=np.float64)
        else:
            w = 1.0 / np.arange(1, self.n_classes + 1, dtype=np.float64)
        if self.kind == "single":
            return w / w.sum()
        # multi-label: rates with the most frequent class at 0.6
        return 0.6 * w / w.max()


_ONSETS = ["b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t",
           "v", "w", "z", "br", "cl", "dr", "fl", "gr", "pl", "st", "tr", "sh", "ch"]
_NUCLEI = ["a", "e", "i", "o", "u", "ai", "ou", "ea", "io"]
_CODAS = ["", "", "n", "r", "s", "l", "m", "t", "x", "nd", "st"]


def _pseudo_word(rng: np.random.Generator, n_syll: int) -> str:
    parts = []
    for _ in range(n_syll):
        parts.append(_ONSETS[rng.integers(len(_ONSETS))])
        parts.append(_NUCLEI[rng.integers(len(_NUCLEI))])
        parts.append(_CODAS[rng.integers(len(_CODAS))])
    return "".join(parts)


def _unique_pseudo_words(rng: np.random.Generator, count: int, syllables: tuple[int, int],
                         taken: set[str]) -> list[str]:
    out: list[str] = []
    while len(out) < count:
        w = _pseudo_word(rng, int(rng.integers(syllables[0], syllables[1] + 1)))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def load_easy_words() -> list[str]:
    """The bundled Dale-Chall style easy word list, in file order."""
    text = resources.files("pielab").joinpath("data/easy_words.txt").read_text(encoding="utf-8")
    return [w.strip().lower() for w in text.splitlines() if w.strip()]


def _allocate(weights: np.ndarray, n: int) -> np.ndarray:
    """Largest-remainder integer allocation of ``n`` items to ``weights``."""
    raw = weights * n
    counts = np.floor(raw).astype(np.int64)
    short = n - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


def generate_synthetic_corpus(spec: SyntheticSpec = SyntheticSpec()) -> CorpusSplits:
    """Deterministic synthetic text-classification corpus."""
    spec.validate()
    rng = np.random.default_rng([spec.seed, 0x5EED])
    C = spec.n_classes
    easy = [w for w in load_easy_words() if w.isalpha()]
    taken = set(easy)
    signal = [_unique_pseudo_words(rng, spec.signal_words_per_class, (1, 2), taken)
              for _ in range(C)]
    pick = np.sort(rng.choice(len(easy), size=min(spec.common_words, len(easy)), replace=False))
    common = [easy[i] for i in pick]
    weights = spec.weights()

    def draw_labels(n: int) -> list[tuple[int, ...]]:
        if spec.kind == "single":
            counts = _allocate(weights, n)
            flat = np.repeat(np.arange(C), counts)
            rng.shuffle(flat)
            return [(int(c),) for c in flat]
        out = []
        for _ in range(n):
            member = np.flatnonzero(rng.random(C) < weights)
            if member.size == 0:
                member = np.array([rng.choice(C, p=weights / weights.sum())])
            out.append(tuple(int(c) for c in member))
        return out

    def make_text(labels: tuple[int, ...], hard: bool) -> str:
        mean_len = spec.mean_length * (spec.hard_length_factor if hard else 1.0)
        n_tok = max(2, int(rng.poisson(mean_len)))
        p_sig = spec.hard_signal_rate if hard else spec.signal_rate
        p_rare = spec.hard_rare_rate if hard else spec.rare_rate
        words = []
        for _ in range(n_tok):
            u = rng.random()
            if u < p_sig:
                cls = labels[rng.integers(len(labels))]
                if hard and rng.random() < spec.hard_confusion:
                    cls = int(rng.integers(C))
                words.append(signal[cls][rng.integers(len(signal[cls]))])
            elif u < p_sig + p_rare:
                words.append(_pseudo_word(rng, int(rng.integers(3, 6))))
            else:
                words.append(common[rng.integers(len(common))])
        # sentences of 5-14 words, occasional comma or number
        sentences, i = [], 0
        while i < len(words):
            k = int(rng.integers(5, 15))
            chunk = words[i:i + k]
            i += k
            if rng.random() < 0.15:
                chunk.insert(int(rng.integers(len(chunk) + 1)), str(int(rng.integers(1, 1000))))
            if len(chunk) > 3 and rng.random() < 0.3:
                j = int(rng.integers(1, len(chunk) - 1))
                chunk[j] = chunk[j] + ","
            s = " ".join(chunk)
            sentences.append(s[0].upper() + s[1:] + ".!?"[int(rng.choice(3, p=[0.8, 0.1, 0.1]))])
        return " ".join(sentences)

    next_id = 0
    splits = []
    for n in (spec.n_train, spec.n_validation, spec.n_test):
        labels = draw_labels(n)
        hard_flags = rng.random(n) < spec.hard_fraction
        examples = []
        for lab, hard in zip(labels, hard_flags):
            text = make_text(lab, bool(hard))
            if spec.label_noise and rng.random() < spec.label_noise:
                if spec.kind == "single":
                    lab = (int((lab[0] + rng.integers(1, C)) % C),)
                else:
                    flip = int(rng.integers(C))
                    flipped = set(lab) ^ {flip}
                    lab = tuple(sorted(flipped)) if flipped else lab
            examples.append(RawExample(next_id, text, lab))
            next_id += 1
        splits.append(tuple(examples))
    names = tuple(f"class_{c}" for c in range(C))
    return CorpusSplits(*splits, label_space=LabelSpace(names, spec.kind))


def class_frequencies(examples: Iterable[RawExample], num_classes: int) -> np.ndarray:
    counts = np.zeros(num_classes, dtype=np.int64)
    for ex in examples:
        for c in ex.labels:
            counts[c] += 1
    return counts
