"""Topic-quality metrics (NPMI, UMass, diversity, embedding coherence), multi-label F1, rank averaging."""
from __future__ import annotations

import logging
import math
from decimal import ROUND_HALF_UP, Decimal
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .corpus import CoocStats
from .embedding import EmbeddingMatrix

log = logging.getLogger(__name__)

HIGHER_BETTER = ("npmi", "diversity", "ec")
ZERO_BETTER = ("umass",)


def npmi(stats: CoocStats, topic_terms: Sequence[int], epsilon: float = 1.0, epsilon_mode: str = "count") -> float:
    """Mean NPMI over unordered term pairs, from sliding-window probabilities.

    ``epsilon_mode="count"`` adds ``epsilon`` to the joint window count (so the
    probability-level constant is ``epsilon / total_windows``); ``"prob"``
    adds ``epsilon`` to the joint probability as is. Pair scores are clipped
    to [-1, 1] because additive smoothing can push them slightly outside.
    """
    if len(topic_terms) < 2:
        raise ValueError("NPMI needs at least two terms")
    if stats.total_windows == 0:
        raise ValueError("co-occurrence statistics contain no windows")
    n = stats.total_windows
    eps = epsilon / n if epsilon_mode == "count" else epsilon
    for w in topic_terms:
        if stats.window_count(w) == 0:
            raise ValueError(f"term id {w} never occurs in a window")
    total = 0.0
    pairs = list(combinations(topic_terms, 2))
    for wi, wj in pairs:
        joint = stats.pair(wi, wj) / n + eps
        denom = -math.log(joint)
        if denom <= 0.0:
            score = 1.0
        else:
            score = math.log(joint / ((stats.window_count(wi) / n) * (stats.window_count(wj) / n))) / denom
        total += min(1.0, max(-1.0, score))
    return total / len(pairs)


def umass(stats: CoocStats, topic_terms: Sequence[int], epsilon: float = 1.0) -> float:
    """Mean of ``log((D(w_i, w_j) + eps) / D(w_j))`` over pairs where ``w_j`` outranks ``w_i``."""
    if len(topic_terms) < 2:
        raise ValueError("UMass needs at least two terms")
    total, count = 0.0, 0
    for i in range(1, len(topic_terms)):
        for j in range(i):
            wi, wj = topic_terms[i], topic_terms[j]
            dj = stats.doc_count(wj)
            if dj == 0:
                raise ValueError(f"term id {wj} occurs in no document")
            total += math.log((stats.doc_pair(wi, wj) + epsilon) / dj)
            count += 1
    return total / count


def diversity(term_lists: Sequence[Sequence[str]], top_n: int) -> float:
    for k, terms in enumerate(term_lists):
        if len(terms) < top_n:
            raise ValueError(f"aspect {k} has {len(terms)} terms, fewer than top_n={top_n}")
    unique = {t for terms in term_lists for t in terms[:top_n]}
    return len(unique) / (top_n * len(term_lists))


def embedding_coherence(embeddings: EmbeddingMatrix | np.ndarray, topic_terms: Sequence[int], n: int | None = None,
                        tokens: Sequence[str] | None = None) -> float:
    vectors = embeddings.vectors if isinstance(embeddings, EmbeddingMatrix) else np.asarray(embeddings)
    terms = list(topic_terms[:n] if n else topic_terms)
    if len(terms) < 2:
        raise ValueError("embedding coherence needs at least two terms")
    rows = vectors[terms]
    norms = np.linalg.norm(rows, axis=1)
    for w, nrm in zip(terms, norms):
        if nrm == 0:
            raise ValueError(f"zero-norm embedding for {tokens[w] if tokens else w!r}")
    unit = rows / norms[:, None]
    sims = unit @ unit.T
    iu = np.triu_indices(len(terms), k=1)
    return float(sims[iu].mean())


# ---------------------------------------------------------------- reports


@dataclass
class CoherenceReport:
    npmi: list[float]
    umass: list[float]
    ec: list[float]
    diversity: float
    top_n_used: int
    epsilon_used: float
    epsilon_mode: str = "count"

    @property
    def mean_npmi(self) -> float:
        return float(np.mean(self.npmi))

    @property
    def mean_umass(self) -> float:
        return float(np.mean(self.umass))

    @property
    def embedding_coherence(self) -> float:
        return float(np.mean(self.ec))

    def summary(self) -> dict[str, float]:
        return {"npmi": self.mean_npmi, "umass": self.mean_umass, "diversity": self.diversity,
                "ec": self.embedding_coherence}

    def to_json(self) -> dict:
        return {"per_aspect": {"npmi": self.npmi, "umass": self.umass, "ec": self.ec},
                **self.summary(), "top_n_used": self.top_n_used, "epsilon_used": self.epsilon_used,
                "epsilon_mode": self.epsilon_mode}


def coherence_report(stats: CoocStats, embeddings: EmbeddingMatrix | np.ndarray, term_ids: Sequence[Sequence[int]],
                     top_n: int = 20, epsilon: float = 1.0, epsilon_mode: str = "count") -> CoherenceReport:
    """Per-aspect metrics over each aspect's first ``top_n`` terms, given as word ids in rank order."""
    lists = [list(t[:top_n]) for t in term_ids]
    return CoherenceReport(
        npmi=[npmi(stats, t, epsilon, epsilon_mode) for t in lists],
        umass=[umass(stats, t, epsilon) for t in lists],
        ec=[embedding_coherence(embeddings, t) for t in lists],
        diversity=diversity(lists, top_n),
        top_n_used=top_n,
        epsilon_used=epsilon,
        epsilon_mode=epsilon_mode,
    )


@dataclass
class F1Report:
    micro_f1: float
    macro_f1: float
    per_label: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"micro_f1": self.micro_f1, "macro_f1": self.macro_f1, "per_label": self.per_label}


def _f1(tp, fp, fn):
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
    return precision, recall, f1


def multilabel_f1(predicted: Mapping[str, set], gold: Mapping[str, set], label_universe: Sequence[str],
                  exclude_zero_support: bool = False) -> F1Report:
    """Micro-F1 pools TP/FP/FN over labels; macro-F1 is the unweighted mean of per-label F1."""
    if set(predicted) != set(gold):
        diff = sorted(set(predicted) ^ set(gold))
        raise ValueError(f"review ids differ between predicted and gold: {diff[:10]}")
    per_label = {}
    TP = FP = FN = 0
    for label in label_universe:
        tp = fp = fn = 0
        for rid, gold_set in gold.items():
            in_pred, in_gold = label in predicted[rid], label in gold_set
            tp += in_pred and in_gold
            fp += in_pred and not in_gold
            fn += in_gold and not in_pred
        p, r, f = _f1(tp, fp, fn)
        per_label[label] = {"precision": p, "recall": r, "f1": f, "tp": tp, "fp": fp, "fn": fn,
                            "support": tp + fn}
        TP, FP, FN = TP + tp, FP + fp, FN + fn
    macro_labels = [l for l in label_universe if not (exclude_zero_support and per_label[l]["support"] == 0)]
    macro = float(np.mean([per_label[l]["f1"] for l in macro_labels])) if macro_labels else 0.0
    return F1Report(_f1(TP, FP, FN)[2], macro, per_label)


def rank_average(table: Mapping[str, Mapping[str, float | None]], metrics: Sequence[str] | None = None,
                 ties: str = "min") -> dict[str, float]:
    """Mean rank per model across metrics (1 = best).

    NPMI, diversity and EC rank higher-is-better; UMass ranks by distance to
    zero. ``ties="min"`` gives tied models the best shared rank, ``"average"``
    their mean rank. Missing values drop that metric for that model only.
    """
    if len(table) < 2:
        raise ValueError("rank averaging needs at least two models")
    models = list(table)
    metrics = list(metrics or [m for m in ("npmi", "umass", "diversity", "ec")
                               if any(m in row for row in table.values())])
    ranks: dict[str, list[float]] = {m: [] for m in models}
    for metric in metrics:
        present = [m for m in models if table[m].get(metric) is not None]
        for m in models:
            if m not in present:
                log.warning("model %s has no %s value; skipping that metric for it", m, metric)
        if not present:
            continue
        values = np.array([table[m][metric] for m in present], dtype=float)
        key = -np.abs(values) if metric in ZERO_BETTER else values
        r = rankdata(-key, method=ties)
        for m, rank in zip(present, r):
            ranks[m].append(float(rank))
    return {m: float(np.mean(r)) if r else float("nan") for m, r in ranks.items()}


def format_table(rows: Mapping[str, Mapping[str, float | None]], rank_avg: Mapping[str, float] | None = None) -> str:
    """Aligned text table with NPMI / UMass / Diversity / EC / Rank Avg columns."""
    head = f"{'Model':<16}{'NPMI':>9}{'UMass':>9}{'Diversity':>11}{'EC':>9}{'Rank Avg':>10}"
    lines = [head, "-" * len(head)]

    def cell(v, width):
        return f"{'-':>{width}}" if v is None else f"{v:>{width}.3f}"

    def rank_cell(v):
        # half-up, so a mean rank of 3.25 prints as 3.3
        return f"{'-':>10}" if v is None else f"{str(Decimal(str(v)).quantize(Decimal('0.1'), ROUND_HALF_UP)):>10}"

    for name, row in rows.items():
        ra = rank_avg.get(name) if rank_avg else None
        lines.append(f"{name:<16}{cell(row.get('npmi'), 9)}{cell(row.get('umass'), 9)}"
                     f"{cell(row.get('diversity'), 11)}{cell(row.get('ec'), 9)}{rank_cell(ra)}")
    return "\n".join(lines) + "\n"
