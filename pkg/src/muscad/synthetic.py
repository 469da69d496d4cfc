"""Planted-topic review generator used as recoverable ground truth."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_TOPICS = {
    "Room": ["bed", "pillow", "sheets", "blanket", "mattress", "closet", "desk", "curtain",
             "carpet", "lamp", "sofa", "wardrobe"],
    "Service": ["staff", "reception", "concierge", "friendly", "helpful", "polite", "checkin",
                "checkout", "manager", "desk_clerk", "porter", "housekeeping"],
    "Breakfast": ["buffet", "coffee", "eggs", "toast", "bacon", "juice", "pancakes", "cereal",
                  "croissant", "yogurt", "omelette", "fruit"],
}


@dataclass
class PlantedCorpus:
    reviews: list[tuple[str, list[str]]]
    sentence_topics: list[int]          # topic index of each generated sentence, corpus order
    review_labels: dict[str, set[str]]  # gold label set per review id
    topics: dict[str, list[str]]

    def to_jsonl(self) -> str:
        return "".join(json.dumps({"id": rid, "tokens": toks}) + "\n" for rid, toks in self.reviews)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    def gold_jsonl(self) -> str:
        return "".join(json.dumps({"review_id": rid, "labels": sorted(self.review_labels[rid])}) + "\n"
                       for rid, _ in self.reviews)


def make_topics(n_topics: int, words_per_topic: int) -> dict[str, list[str]]:
    if n_topics <= len(DEFAULT_TOPICS) and words_per_topic <= 12:
        return {name: words[:words_per_topic] for name, words in list(DEFAULT_TOPICS.items())[:n_topics]}
    return {f"topic{t}": [f"t{t}w{j:03d}" for j in range(words_per_topic)] for t in range(n_topics)}


def planted_topic_corpus(n_topics: int = 3, sentences_per_topic: int = 100, words_per_topic: int = 12,
                         sentence_len: tuple[int, int] = (6, 10), sentences_per_review: tuple[int, int] = (1, 3),
                         seed: int = 0, topics: dict[str, list[str]] | None = None,
                         background_sentences: int = 0, background_words: int = 0) -> PlantedCorpus:
    """Sentences draw every token from one topic's private vocabulary and end with ".".

    Sentences are shuffled and grouped into reviews, so reviews may mix topics.
    Optional background sentences (topic index -1, no gold label) draw from a
    separate pool of ``background_words`` filler tokens.
    """
    rng = np.random.default_rng(seed)
    topics = topics or make_topics(n_topics, words_per_topic)
    names = list(topics)
    if background_sentences and background_words < 1:
        raise ValueError("background sentences need background_words >= 1")
    filler = [f"bg{j:04d}" for j in range(background_words)]
    plan = rng.permutation(np.concatenate([np.repeat(np.arange(len(names)), sentences_per_topic),
                                           np.full(background_sentences, -1)]))
    sentences = []
    for t in plan:
        words = topics[names[t]] if t >= 0 else filler
        length = int(rng.integers(sentence_len[0], sentence_len[1] + 1))
        sentences.append([words[j] for j in rng.integers(0, len(words), size=length)] + ["."])

    reviews, labels, i = [], {}, 0
    while i < len(sentences):
        size = int(rng.integers(sentences_per_review[0], sentences_per_review[1] + 1))
        chunk = range(i, min(i + size, len(sentences)))
        rid = f"r{len(reviews):04d}"
        reviews.append((rid, [tok for s in chunk for tok in sentences[s]]))
        labels[rid] = {names[plan[s]] for s in chunk if plan[s] >= 0}
        i = chunk.stop
    return PlantedCorpus(reviews, [int(t) for t in plan], labels, topics)


def purity(predicted: np.ndarray, truth: np.ndarray) -> float:
    """Fraction of items whose predicted cluster's majority true class matches their own."""
    predicted, truth = np.asarray(predicted), np.asarray(truth)
    if len(predicted) == 0:
        raise ValueError("purity of an empty assignment")
    hits = 0
    for c in np.unique(predicted):
        hits += np.bincount(truth[predicted == c]).max()
    return hits / len(predicted)
