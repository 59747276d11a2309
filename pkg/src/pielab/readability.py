"""Readability battery: six grade-level formulas, difficult words, text length.

Constants follow the original formulas:

* ARI = 4.71 * letters/words + 0.5 * words/sentences - 21.43
* Coleman-Liau = 0.0588 * L - 0.296 * S - 15.8 (L, S per 100 words)
* Flesch-Kincaid = 0.39 * words/sentences + 11.8 * syllables/words - 15.59
* Linsear Write over the whole text: r = (easy + 3 * hard) / sentences,
  grade r/2 if r > 20 else r/2 - 1
* Gunning Fog = 0.4 * (words/sentences + 100 * complex/words)
* Dale-Chall = 0.1579 * PDW + 0.0496 * words/sentences (+3.6365 if PDW > 5)
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import load_easy_words, tokenize

GRADE_METRICS = ("ari", "coleman_liau", "flesch_kincaid", "linsear_write", "gunning_fog",
                 "dale_chall")
METRICS = GRADE_METRICS + ("difficult_words", "token_length")
EMPTY = "empty"
UNDEFINED = "undefined"

_SENTENCE_END = re.compile(r"[.!?;](?=\s|$)")
_VOWEL_GROUP = re.compile(r"[aeiouy]+")


class EasyWordList:
    def __init__(self, words: Iterable[str]):
        self.words = frozenset(w.strip().lower() for w in words if w.strip())
        if not self.words:
            raise ValueError("easy word list is empty")

    def __contains__(self, word: str) -> bool:
        return word.lower() in self.words

    def __len__(self) -> int:
        return len(self.words)

    @classmethod
    def from_file(cls, path) -> "EasyWordList":
        return cls(Path(path).read_text(encoding="utf-8").splitlines())


@lru_cache(maxsize=1)
def default_easy_words() -> EasyWordList:
    return EasyWordList(load_easy_words())


def split_sentences(text: str) -> list[str]:
    """Split after '.', '!', '?' or ';' followed by whitespace or the end.

    Empty segments are dropped; text without any terminator is one sentence.
    """
    parts = _SENTENCE_END.split(text)
    return [p.strip() for p in parts if p.strip()]


def count_syllables(word: str) -> int:
    w = "".join(ch for ch in word.lower() if ch.isalpha())
    if not w:
        return 1
    n = len(_VOWEL_GROUP.findall(w))
    if w.endswith("e") and not (len(w) >= 3 and w.endswith("le") and w[-3] not in "aeiouy"):
        n -= 1
    return max(1, n)


@dataclass(frozen=True)
class TextStats:
    words: int
    sentences: int
    letters: int
    syllables_per_word: tuple[int, ...]
    complex_word_count: int
    difficult_word_count: int
    token_length: int

    @property
    def syllables(self) -> int:
        return sum(self.syllables_per_word)

    @property
    def empty(self) -> bool:
        return self.words == 0


def compute_stats(text: str, easy_list: EasyWordList | None = None) -> TextStats:
    easy_list = easy_list if easy_list is not None else default_easy_words()
    words = tokenize(text)
    if not words:
        return TextStats(0, 0, 0, (), 0, 0, 0)
    sentences = max(1, len(split_sentences(text)))
    syll = tuple(count_syllables(w) for w in words)
    return TextStats(
        words=len(words),
        sentences=sentences,
        letters=sum(ch.isalpha() for w in words for ch in w),
        syllables_per_word=syll,
        complex_word_count=sum(s >= 3 for s in syll),
        difficult_word_count=sum(w not in easy_list for w in words),
        token_length=len(words),
    )


def grade_scores(stats: TextStats) -> dict[str, float] | None:
    """Six grade-level scores, or None for empty text."""
    if stats.empty:
        return None
    W, S = stats.words, stats.sentences
    wps = W / S
    L = 100.0 * stats.letters / W
    S100 = 100.0 * S / W
    easy = sum(s <= 2 for s in stats.syllables_per_word)
    hard = W - easy
    r = (easy + 3 * hard) / S
    pdw = 100.0 * stats.difficult_word_count / W
    return {
        "ari": 4.71 * (stats.letters / W) + 0.5 * wps - 21.43,
        "coleman_liau": 0.0588 * L - 0.296 * S100 - 15.8,
        "flesch_kincaid": 0.39 * wps + 11.8 * (stats.syllables / W) - 15.59,
        "linsear_write": r / 2 if r > 20 else r / 2 - 1,
        "gunning_fog": 0.4 * (wps + 100.0 * stats.complex_word_count / W),
        "dale_chall": 0.1579 * pdw + 0.0496 * wps + (3.6365 if pdw > 5 else 0.0),
    }


def all_scores(text: str, easy_list: EasyWordList | None = None) -> dict[str, float] | None:
    """All eight metrics for one text (None when the text has no words)."""
    stats = compute_stats(text, easy_list)
    grades = grade_scores(stats)
    if grades is None:
        return None
    return {**grades, "difficult_words": float(stats.difficult_word_count),
            "token_length": float(stats.token_length)}


# ---------------------------------------------------------------- PIE ratios


@dataclass
class ReadabilityTable:
    example_ids: np.ndarray
    scores: np.ndarray  # (n, 8), NaN rows for empty texts

    @classmethod
    def from_texts(cls, example_ids: Sequence[int], texts: Sequence[str],
                   easy_list: EasyWordList | None = None) -> "ReadabilityTable":
        rows = []
        for t in texts:
            s = all_scores(t, easy_list)
            rows.append([np.nan] * len(METRICS) if s is None else [s[m] for m in METRICS])
        return cls(np.asarray(example_ids, dtype=np.int64), np.asarray(rows, dtype=np.float64))

    def to_csv(self, pie_flags: Sequence[bool] | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["example_id", "is_pie", *METRICS])
        flags = [""] * len(self.example_ids) if pie_flags is None else [int(f) for f in pie_flags]
        for eid, flag, row in zip(self.example_ids.tolist(), flags, self.scores):
            cells = [EMPTY if np.isnan(v) else repr(float(v)) for v in row]
            w.writerow([eid, flag, *cells])
        return buf.getvalue()


def ratios(table: ReadabilityTable, pie_flags: Sequence[bool]) -> dict[str, float | None]:
    """Mean over PIEs divided by mean over all examples, per metric.

    None marks an undefined ratio (no PIEs, or an all-zero denominator).
    Texts without words are left out of both means.
    """
    flags = np.asarray(pie_flags, dtype=bool)
    valid = ~np.isnan(table.scores[:, 0])
    out: dict[str, float | None] = {}
    for j, m in enumerate(METRICS):
        col = table.scores[:, j]
        pies = flags & valid
        if not pies.any():
            out[m] = None
            continue
        denom = col[valid].mean()
        out[m] = None if denom == 0 else float(col[pies].mean() / denom)
    return out


def ratio_report(table: ReadabilityTable,
                 verdicts_by_condition: Mapping[tuple[str, float], Sequence[bool]]) -> list[dict]:
    """Rows of (pruner_id, threshold, metric, ratio), plus a ``mean`` pruner
    row per threshold averaging the defined ratios of all pruners."""
    rows = []
    per_threshold: dict[float, dict[str, list[float]]] = {}
    for (pid, t), flags in verdicts_by_condition.items():
        r = ratios(table, flags)
        for m in METRICS:
            rows.append({"pruner_id": pid, "threshold": t, "metric": m, "ratio": r[m]})
            if r[m] is not None:
                per_threshold.setdefault(t, {}).setdefault(m, []).append(r[m])
    thresholds = sorted({t for _, t in verdicts_by_condition})
    for t in thresholds:
        for m in METRICS:
            vals = per_threshold.get(t, {}).get(m)
            rows.append({"pruner_id": "mean", "threshold": t, "metric": m,
                         "ratio": float(np.mean(vals)) if vals else None})
    return rows


def ratios_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["pruner_id", "threshold", "metric", "ratio"])
    for r in rows:
        w.writerow([r["pruner_id"], repr(float(r["threshold"])), r["metric"],
                    UNDEFINED if r["ratio"] is None else repr(float(r["ratio"]))])
    return buf.getvalue()
