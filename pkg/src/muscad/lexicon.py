"""Aspect term lexicons, multi-label review annotation and category naming."""
from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import httpx
import numpy as np

from .aspect_model import AspectModelParams
from .corpus import TokenizedCorpus, Vocabulary
from .embedding import EmbeddingMatrix

log = logging.getLogger(__name__)

PROVENANCE = ("auto", "llm_named", "human_edited")

CANDIDATES = {
    "hotel": ["Cleanliness", "View", "Service", "Facilities", "Room", "Pool", "Parking", "Breakfast",
              "Amenity", "Location", "Satisfaction"],
    "food": ["Taste", "Satisfaction", "Service", "Food Quantity", "Menu", "Waiting Time", "Atmosphere",
             "Cleanliness", "Price", "Purpose", "Delivery", "Location", "Amenities"],
    "beauty": ["Pigmentation", "Persistence", "Moisture", "Skin Type", "Spreadability", "Usage Method",
               "Scent", "Color", "Seasonal Use", "Irritation", "Ingredients", "Hair", "Improvement",
               "Satisfaction", "Packaging", "Purchase"],
}

DEFAULT_PROMPT = (
    "You label clusters of review words with an aspect category.\n"
    "Aspect terms: {terms}\n"
    "Candidate categories: {candidates}\n"
    "Answer with the single best-fitting category from the candidates. If none fits, "
    "answer with one short new category name instead. Reply with the category name only."
)


@dataclass
class Aspect:
    index: int
    terms: list[tuple[str, float]]
    category_name: str = ""
    provenance: str = "auto"

    def __post_init__(self):
        if not self.category_name:
            self.category_name = f"aspect_{self.index}"


@dataclass
class AspectLexicon:
    aspects: list[Aspect]

    @property
    def top_n(self) -> int:
        return len(self.aspects[0].terms) if self.aspects else 0

    def names(self) -> list[str]:
        return [a.category_name for a in self.aspects]

    def term_lists(self, top_n: int | None = None) -> list[list[str]]:
        return [[t for t, _ in a.terms[:top_n]] for a in self.aspects]

    def truncated(self, top_n: int) -> "AspectLexicon":
        return AspectLexicon([Aspect(a.index, a.terms[:top_n], a.category_name, a.provenance) for a in self.aspects])

    def to_json(self) -> dict:
        return {"aspects": [
            {"index": a.index, "category_name": a.category_name, "provenance": a.provenance,
             "terms": [{"token": t, "score": s} for t, s in a.terms]}
            for a in self.aspects
        ]}

    @classmethod
    def from_json(cls, obj: dict) -> "AspectLexicon":
        return cls([Aspect(a["index"], [(t["token"], float(t["score"])) for t in a["terms"]],
                           a["category_name"], a.get("provenance", "auto")) for a in obj["aspects"]])

    @classmethod
    def from_terms(cls, terms: Sequence[Sequence[str]], names: Sequence[str] | None = None) -> "AspectLexicon":
        """Hand-built lexicon; scores count down from 1 in list order."""
        aspects = []
        for k, words in enumerate(terms):
            scored = [(w, 1.0 - j / max(len(words), 1)) for j, w in enumerate(words)]
            aspects.append(Aspect(k, scored, names[k] if names else "", "human_edited" if names else "auto"))
        return cls(aspects)


def extract_lexicon(model: AspectModelParams | np.ndarray, embeddings: EmbeddingMatrix | np.ndarray,
                    vocab: Vocabulary, top_n: int = 150) -> AspectLexicon:
    """Rank words per aspect by cosine between word vector and aspect row; ties go lexicographic."""
    ec = model.ec if isinstance(model, AspectModelParams) else np.asarray(model)
    vectors = embeddings.vectors if isinstance(embeddings, EmbeddingMatrix) else np.asarray(embeddings)
    if not 1 <= top_n <= len(vocab):
        raise ValueError(f"top_n must lie in [1, {len(vocab)}], got {top_n}")
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    words = np.divide(vectors, norms, out=np.zeros_like(vectors), where=norms > 0)
    rows = ec / np.linalg.norm(ec, axis=1, keepdims=True)
    scores = rows @ words.T
    tokens = vocab.id_to_token
    aspects = []
    for k in range(len(ec)):
        order = sorted(range(len(tokens)), key=lambda i: (-scores[k, i], tokens[i]))[:top_n]
        aspects.append(Aspect(k, [(tokens[i], float(scores[k, i])) for i in order]))
    return AspectLexicon(aspects)


# ---------------------------------------------------------------- labeling


@dataclass
class LabelSet:
    labels: dict[str, set[str]]
    matches: dict[int, list[tuple[str, int]]] = field(default_factory=dict)
    n_sentences: int = 0
    sentence_owner: dict[int, str] = field(default_factory=dict)

    def sentence_labels(self, sentence: int, lexicon: AspectLexicon) -> set[str]:
        names = lexicon.names()
        return {names[k] for _, k in self.matches.get(sentence, [])}

    def coverage(self) -> float:
        """Fraction of sentences with at least one label."""
        if self.n_sentences == 0:
            return 0.0
        return sum(1 for m in self.matches.values() if m) / self.n_sentences

    def to_jsonl(self) -> str:
        by_review: dict[str, list[dict]] = {rid: [] for rid in self.labels}
        sentences: dict[str, list[int]] = {rid: [] for rid in self.labels}
        for s in sorted(self.sentence_owner):
            sentences[self.sentence_owner[s]].append(s)
        for s in sorted(self.matches):
            for token, k in self.matches[s]:
                by_review[self.sentence_owner[s]].append({"sentence": s, "token": token, "aspect": k})
        return "".join(
            json.dumps({"review_id": rid, "labels": sorted(labs), "sentences": sentences[rid],
                        "matched_terms": by_review[rid]},
                       ensure_ascii=False) + "\n"
            for rid, labs in self.labels.items()
        )

    @classmethod
    def from_jsonl(cls, text: str) -> "LabelSet":
        labels, matches, owner = {}, {}, {}
        for line in text.splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            labels[obj["review_id"]] = set(obj["labels"])
            for s in obj.get("sentences", []):
                owner[s] = obj["review_id"]
            for m in obj.get("matched_terms", []):
                matches.setdefault(m["sentence"], []).append((m["token"], m["aspect"]))
                owner[m["sentence"]] = obj["review_id"]
        return cls(labels, matches, len(owner), owner)


def label_reviews(corpus: TokenizedCorpus, vocab: Vocabulary, lexicon: AspectLexicon) -> LabelSet:
    """A sentence gets aspect k when one of its tokens is in k's term list; reviews take the union."""
    term_aspects: dict[str, list[int]] = {}
    for a in lexicon.aspects:
        for token, _ in a.terms:
            term_aspects.setdefault(token, [])
            if a.index not in term_aspects[token]:
                term_aspects[token].append(a.index)
    names = {a.index: a.category_name for a in lexicon.aspects}

    labels: dict[str, set[str]] = {}
    matches: dict[int, list[tuple[str, int]]] = {}
    owner: dict[int, str] = {}
    for r, rid in enumerate(corpus.review_ids):
        review_labels: set[str] = set()
        for s in corpus.review_sentences(r):
            owner[s] = rid
            found: list[tuple[str, int]] = []
            for token in vocab.decode(corpus.content(s)):
                for k in term_aspects.get(token, ()):
                    if (token, k) not in found:
                        found.append((token, k))
            if found:
                matches[s] = found
                review_labels.update(names[k] for _, k in found)
        labels[rid] = review_labels
    return LabelSet(labels, matches, len(corpus), owner)


def label_reviews_model(corpus: TokenizedCorpus, probs: dict[int, np.ndarray], lexicon: AspectLexicon,
                        tau: float = 0.2) -> LabelSet:
    """Label a sentence with every aspect whose probability reaches ``tau``.

    ``probs`` maps corpus sentence index to the model's aspect distribution;
    sentences without an entry get no label. The trace records the aspect's
    top term as the matched token.
    """
    names = lexicon.names()
    labels, matches, owner = {}, {}, {}
    for r, rid in enumerate(corpus.review_ids):
        review_labels = set()
        for s in corpus.review_sentences(r):
            owner[s] = rid
            if s not in probs:
                continue
            ks = [int(k) for k in np.flatnonzero(np.asarray(probs[s]) >= tau)]
            if ks:
                matches[s] = [(lexicon.aspects[k].terms[0][0] if lexicon.aspects[k].terms else "", k) for k in ks]
                review_labels.update(names[k] for k in ks)
        labels[rid] = review_labels
    return LabelSet(labels, matches, len(corpus), owner)


# ---------------------------------------------------------------- naming


@dataclass
class NamingConfig:
    endpoint: str | None = None
    model: str = "gpt-3.5-turbo"
    temperature: float = 0.0
    token_env: str = "MUSCAD_API_TOKEN"
    timeout: float = 30.0
    max_retries: int = 3
    audit_path: str | None = None
    mapping_path: str | None = None
    domain: str | None = None
    candidates: list[str] = field(default_factory=list)
    prompt_template: str = DEFAULT_PROMPT
    terms_in_prompt: int = 20


@dataclass
class NamingResult:
    lexicon: AspectLexicon
    status: str                      # ok | offline | fallback | degraded
    novel: list[int] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def degraded(self) -> bool:
        return self.status in ("fallback", "degraded")


class ServiceUnavailable(Exception):
    pass


_PREFIX_RE = re.compile(r"^(aspect\s+)?(category|answer)\s*[:\-]\s*", re.IGNORECASE)


def parse_category(text: str) -> str | None:
    """One category name from a completion, or ``None`` when the reply is unusable."""
    for line in (text or "").splitlines():
        line = line.strip().strip("*`").strip()
        if not line:
            continue
        line = _PREFIX_RE.sub("", line).strip().strip("\"'").rstrip(".").strip()
        if not line or len(line) > 64 or len(line.split()) > 6:
            return None
        return line
    return None


def load_mapping(path: str | Path) -> dict[int, str]:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(obj, list):
        return {i: str(name) for i, name in enumerate(obj)}
    return {int(k): str(v) for k, v in obj.items()}


def apply_mapping(lexicon: AspectLexicon, mapping: dict[int, str]) -> AspectLexicon:
    aspects = []
    for a in lexicon.aspects:
        if a.index in mapping:
            aspects.append(Aspect(a.index, a.terms, mapping[a.index], "human_edited"))
        else:
            aspects.append(Aspect(a.index, a.terms, a.category_name, a.provenance))
    return AspectLexicon(aspects)


class ChatClient:
    """Minimal chat-completion client; every exchange is appended to an audit file."""

    def __init__(self, config: NamingConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(config.token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self.http = httpx.Client(timeout=config.timeout, headers=headers, transport=transport)

    def _audit(self, record: dict) -> None:
        if self.config.audit_path:
            with open(self.config.audit_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")

    def complete(self, prompt: str, tag: str = "") -> str:
        body = {"model": self.config.model, "temperature": self.config.temperature,
                "messages": [{"role": "user", "content": prompt}]}
        try:
            resp = self.http.post(self.config.endpoint, json=body)
        except httpx.HTTPError as exc:
            self._audit({"tag": tag, "request": body, "error": repr(exc)})
            raise ServiceUnavailable(f"cannot reach {self.config.endpoint}: {exc}") from exc
        self._audit({"tag": tag, "request": body, "status": resp.status_code, "response": resp.text})
        if resp.status_code in (401, 403):
            raise ServiceUnavailable(f"authentication rejected by {self.config.endpoint} ({resp.status_code})")
        if resp.status_code >= 500:
            raise ServiceUnavailable(f"{self.config.endpoint} returned {resp.status_code}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            return ""

    def close(self) -> None:
        self.http.close()


def name_categories(lexicon: AspectLexicon, config: NamingConfig,
                    transport: httpx.BaseTransport | None = None) -> NamingResult:
    """Name each aspect from the candidate list via the chat service, or the offline mapping.

    Without an endpoint the mapping file (if any) is applied directly. When the
    service fails, the mapping is used as a fallback; otherwise the
    placeholder names stay and the result is marked degraded.
    """
    mapping = load_mapping(config.mapping_path) if config.mapping_path else None
    candidates = list(config.candidates) or CANDIDATES.get((config.domain or "").lower(), [])

    if not config.endpoint:
        if mapping is not None:
            return NamingResult(apply_mapping(lexicon, mapping), "offline")
        return NamingResult(lexicon, "degraded", warnings=["no naming endpoint and no mapping file"])

    client = ChatClient(config, transport)
    canon = {c.lower(): c for c in candidates}
    aspects, novel, warnings = [], [], []
    try:
        for a in lexicon.aspects:
            prompt = config.prompt_template.format(
                terms=", ".join(t for t, _ in a.terms[:config.terms_in_prompt]),
                candidates=", ".join(candidates) if candidates else "(none given)",
            )
            name = None
            for attempt in range(config.max_retries):
                name = parse_category(client.complete(prompt, tag=f"aspect_{a.index}/attempt_{attempt + 1}"))
                if name:
                    break
            if not name:
                warnings.append(f"aspect {a.index}: no usable reply after {config.max_retries} attempts")
                aspects.append(Aspect(a.index, a.terms, a.category_name, a.provenance))
                continue
            if name.lower() in canon:
                name = canon[name.lower()]
            else:
                novel.append(a.index)
            aspects.append(Aspect(a.index, a.terms, name, "llm_named"))
    except ServiceUnavailable as exc:
        log.warning("naming service failed: %s", exc)
        if mapping is not None:
            return NamingResult(apply_mapping(lexicon, mapping), "fallback", warnings=[str(exc)])
        return NamingResult(lexicon, "degraded", warnings=[str(exc)])
    finally:
        client.close()
    return NamingResult(AspectLexicon(aspects), "degraded" if warnings else "ok", novel, warnings)
