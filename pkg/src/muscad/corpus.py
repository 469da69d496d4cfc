"""Review ingestion, vocabulary building and co-occurrence counting.

Input is JSONL with one review per line, either ``{"id", "text"}`` or
``{"id", "tokens"}``. Text is split on whitespace with sentence terminators
(``.``, ``!``, ``?``) split off as their own tokens; a terminator token closes
the current sentence and stays part of it.
"""
from __future__ import annotations

import json
import re
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError, EmptyCorpusError

OOV = -1
OOV_TOKEN = "<unk>"
CORPUS_MAGIC = "MUSCAD-CORPUS-v1"

_TOKEN_RE = re.compile(r"[^\s.!?]+|[.!?]+")
_TERMINATOR_RE = re.compile(r"^[.!?]+$")

# below this many sentences a process pool costs more than it saves
_PARALLEL_MIN_SENTENCES = 20_000


@dataclass
class TokenizerConfig:
    lowercase: bool = True
    stopwords_path: str | None = None
    stopwords: frozenset[str] = frozenset()
    min_count: int = 5

    def __post_init__(self):
        if self.min_count < 1:
            raise ConfigError(f"min_count must be >= 1, got {self.min_count}")
        self.stopwords = frozenset(self.stopwords)

    def load_stopwords(self) -> frozenset[str]:
        words = set(self.stopwords)
        if self.stopwords_path:
            path = Path(self.stopwords_path)
            try:
                lines = path.read_text(encoding="utf-8").splitlines()
            except OSError as exc:
                raise OSError(f"cannot read stopword list {path}: {exc}") from exc
            for line in lines:
                line = line.strip()
                if line and not line.startswith("#"):
                    words.add(line)
        if self.lowercase:
            words = {w.lower() for w in words}
        return frozenset(words)


@dataclass
class Vocabulary:
    token_to_id: dict[str, int]
    id_to_token: list[str]
    frequency: list[int]
    min_count: int

    def __len__(self):
        return len(self.id_to_token)

    def __contains__(self, token):
        return token in self.token_to_id

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.token_to_id.get(t, OOV) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [OOV_TOKEN if i == OOV else self.id_to_token[i] for i in ids]

    @classmethod
    def from_counts(cls, counts: Counter, min_count: int) -> "Vocabulary":
        kept = sorted(((t, c) for t, c in counts.items() if c >= min_count),
                      key=lambda tc: (-tc[1], tc[0]))
        id_to_token = [t for t, _ in kept]
        return cls(
            token_to_id={t: i for i, t in enumerate(id_to_token)},
            id_to_token=id_to_token,
            frequency=[c for _, c in kept],
            min_count=min_count,
        )

    def to_tsv(self) -> str:
        return "".join(f"{t}\t{i}\t{f}\n" for i, (t, f) in enumerate(zip(self.id_to_token, self.frequency)))

    @classmethod
    def from_tsv(cls, text: str, min_count: int = 1) -> "Vocabulary":
        rows = [line.split("\t") for line in text.splitlines() if line]
        rows.sort(key=lambda r: int(r[1]))
        id_to_token = [r[0] for r in rows]
        if [int(r[1]) for r in rows] != list(range(len(rows))):
            raise ValueError("vocabulary ids are not dense")
        return cls({t: i for i, t in enumerate(id_to_token)}, id_to_token, [int(r[2]) for r in rows], min_count)


@dataclass
class TokenizedCorpus:
    sentences: list[list[int]]
    review_ids: list[str]
    review_bounds: list[tuple[int, int]]
    raw_text: list[str]

    def __len__(self):
        return len(self.sentences)

    @property
    def n_reviews(self) -> int:
        return len(self.review_ids)

    def content(self, index: int) -> list[int]:
        """Word ids of a sentence with OOV sentinels removed."""
        return [i for i in self.sentences[index] if i != OOV]

    def review_sentences(self, review: int) -> range:
        start, stop = self.review_bounds[review]
        return range(start, stop)

    def sentence_review(self) -> list[int]:
        owner = [0] * len(self.sentences)
        for r, (start, stop) in enumerate(self.review_bounds):
            for s in range(start, stop):
                owner[s] = r
        return owner


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


def split_sentences(tokens: Sequence[str]) -> list[list[str]]:
    sentences, current = [], []
    for tok in tokens:
        current.append(tok)
        if _TERMINATOR_RE.match(tok):
            sentences.append(current)
            current = []
    if current:
        sentences.append(current)
    return sentences


def read_reviews(files: Sequence[str | Path]) -> list[tuple[str, list[str]]]:
    """Return ``(review_id, raw_tokens)`` pairs in file order."""
    reviews = []
    for path in files:
        path = Path(path)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise OSError(f"cannot read corpus file {path}: {exc}") from exc
        for lineno, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            rid = str(obj.get("id", f"{path.stem}:{lineno}"))
            if "tokens" in obj:
                tokens = [str(t) for t in obj["tokens"]]
            elif "text" in obj:
                tokens = tokenize(str(obj["text"]))
            else:
                raise ValueError(f"{path}:{lineno}: review needs a 'text' or 'tokens' field")
            reviews.append((rid, tokens))
    return reviews


def build_corpus_from_reviews(reviews: Sequence[tuple[str, Sequence[str]]],
                              config: TokenizerConfig) -> tuple[TokenizedCorpus, Vocabulary]:
    stopwords = config.load_stopwords()
    kept_sentences: list[list[str]] = []
    raw_text: list[str] = []
    review_ids: list[str] = []
    bounds: list[tuple[int, int]] = []
    counts: Counter = Counter()
    for rid, raw_tokens in reviews:
        start = len(kept_sentences)
        for raw_sentence in split_sentences(raw_tokens):
            toks = [t.lower() if config.lowercase else t for t in raw_sentence]
            toks = [t for t in toks if t not in stopwords]
            if not toks:
                continue
            kept_sentences.append(toks)
            raw_text.append(" ".join(raw_sentence))
            counts.update(toks)
        review_ids.append(rid)
        bounds.append((start, len(kept_sentences)))

    vocab = Vocabulary.from_counts(counts, config.min_count)
    if len(vocab) == 0:
        raise EmptyCorpusError("empty corpus: no token survives stopword and min_count filtering")
    sentences = [vocab.encode(toks) for toks in kept_sentences]
    return TokenizedCorpus(sentences, review_ids, bounds, raw_text), vocab


def build_corpus(files: Sequence[str | Path], config: TokenizerConfig) -> tuple[TokenizedCorpus, Vocabulary]:
    return build_corpus_from_reviews(read_reviews(files), config)


# ---------------------------------------------------------------- co-occurrence


@dataclass
class CoocStats:
    window_size: int
    pair_counts: dict[tuple[int, int], int]
    word_window_counts: dict[int, int]
    doc_counts: dict[int, int]
    doc_pair_counts: dict[tuple[int, int], int]
    total_windows: int
    total_docs: int
    doc_unit: str = "review"

    # pairs are stored once with the smaller id first
    def pair(self, i: int, j: int) -> int:
        return self.pair_counts.get((i, j) if i < j else (j, i), 0)

    def doc_pair(self, i: int, j: int) -> int:
        return self.doc_pair_counts.get((i, j) if i < j else (j, i), 0)

    def window_count(self, i: int) -> int:
        return self.word_window_counts.get(i, 0)

    def doc_count(self, i: int) -> int:
        return self.doc_counts.get(i, 0)

    def to_json(self) -> dict:
        def pairs(d):
            return [[i, j, c] for (i, j), c in sorted(d.items())]

        return {
            "window_size": self.window_size,
            "doc_unit": self.doc_unit,
            "total_windows": self.total_windows,
            "total_docs": self.total_docs,
            "word_window_counts": sorted([k, v] for k, v in self.word_window_counts.items()),
            "doc_counts": sorted([k, v] for k, v in self.doc_counts.items()),
            "pair_counts": pairs(self.pair_counts),
            "doc_pair_counts": pairs(self.doc_pair_counts),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CoocStats":
        return cls(
            window_size=obj["window_size"],
            pair_counts={(i, j): c for i, j, c in obj["pair_counts"]},
            word_window_counts={k: v for k, v in obj["word_window_counts"]},
            doc_counts={k: v for k, v in obj["doc_counts"]},
            doc_pair_counts={(i, j): c for i, j, c in obj["doc_pair_counts"]},
            total_windows=obj["total_windows"],
            total_docs=obj["total_docs"],
            doc_unit=obj.get("doc_unit", "review"),
        )


def _count_windows(sentences: list[list[int]], window_size: int):
    pairs: Counter = Counter()
    words: Counter = Counter()
    total = 0
    for ids in sentences:
        for start in range(len(ids)):
            members = sorted(set(ids[start:start + window_size + 1]))
            total += 1
            words.update(members)
            pairs.update(combinations(members, 2))
    return pairs, words, total


def _count_docs(docs: list[list[int]]):
    pairs: Counter = Counter()
    words: Counter = Counter()
    for ids in docs:
        members = sorted(set(ids))
        words.update(members)
        pairs.update(combinations(members, 2))
    return pairs, words


def _shards(items: list, n: int) -> list[list]:
    size = -(-len(items) // n)
    return [items[i:i + size] for i in range(0, len(items), size)]


def compute_cooc_stats(corpus: TokenizedCorpus, window_size: int = 10, doc_unit: str = "review",
                       threads: int = 1) -> CoocStats:
    """Count sliding-window and document co-occurrences.

    Window ``t`` of a sentence covers content tokens ``[t, t + window_size]``;
    each unordered pair of distinct words is counted once per window.
    """
    if window_size < 1:
        raise ConfigError(f"window_size must be >= 1, got {window_size}")
    if doc_unit not in ("review", "sentence"):
        raise ConfigError(f"doc_unit must be 'review' or 'sentence', got {doc_unit!r}")
    sentences = [corpus.content(i) for i in range(len(corpus))]
    if not any(sentences):
        raise EmptyCorpusError("empty corpus: no in-vocabulary tokens to count")
    if doc_unit == "review":
        docs = [[w for s in corpus.review_sentences(r) for w in sentences[s]] for r in range(corpus.n_reviews)]
    else:
        docs = sentences

    if threads > 1 and len(sentences) >= _PARALLEL_MIN_SENTENCES:
        pairs, words, total = Counter(), Counter(), 0
        doc_pairs, doc_words = Counter(), Counter()
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for p, w, t in pool.map(_count_windows, _shards(sentences, threads), [window_size] * threads):
                pairs.update(p)
                words.update(w)
                total += t
            for p, w in pool.map(_count_docs, _shards(docs, threads)):
                doc_pairs.update(p)
                doc_words.update(w)
    else:
        pairs, words, total = _count_windows(sentences, window_size)
        doc_pairs, doc_words = _count_docs(docs)

    return CoocStats(
        window_size=window_size,
        pair_counts=dict(pairs),
        word_window_counts=dict(words),
        doc_counts=dict(doc_words),
        doc_pair_counts=dict(doc_pairs),
        total_windows=total,
        total_docs=len(docs),
        doc_unit=doc_unit,
    )


# ---------------------------------------------------------------- persistence


def dump_corpus(corpus: TokenizedCorpus, vocab: Vocabulary) -> str:
    lines = [
        CORPUS_MAGIC,
        json.dumps({"n_reviews": corpus.n_reviews, "n_sentences": len(corpus), "min_count": vocab.min_count}),
        json.dumps({"tokens": vocab.id_to_token, "frequency": vocab.frequency}, ensure_ascii=False),
    ]
    for r, rid in enumerate(corpus.review_ids):
        sents = [{"ids": corpus.sentences[s], "text": corpus.raw_text[s]} for s in corpus.review_sentences(r)]
        lines.append(json.dumps({"id": rid, "sentences": sents}, ensure_ascii=False))
    return "\n".join(lines) + "\n"


def load_corpus(text: str) -> tuple[TokenizedCorpus, Vocabulary]:
    lines = text.splitlines()
    if not lines or lines[0] != CORPUS_MAGIC:
        raise ValueError(f"not a corpus snapshot (expected leading {CORPUS_MAGIC!r})")
    meta = json.loads(lines[1])
    voc = json.loads(lines[2])
    tokens = voc["tokens"]
    vocab = Vocabulary({t: i for i, t in enumerate(tokens)}, tokens, voc["frequency"], meta["min_count"])
    sentences, raw, ids, bounds = [], [], [], []
    for line in lines[3:]:
        obj = json.loads(line)
        start = len(sentences)
        for s in obj["sentences"]:
            sentences.append(list(s["ids"]))
            raw.append(s["text"])
        ids.append(obj["id"])
        bounds.append((start, len(sentences)))
    return TokenizedCorpus(sentences, ids, bounds, raw), vocab
