"""Independent reference implementations used as test oracles.

Everything here recomputes from raw token lists with plain Python loops so it
shares no code path with the package.
"""
from __future__ import annotations

import math

import numpy as np

from muscad.training import batch_loss_and_grads


# ---------------------------------------------------------------- gradients

def finite_difference_errors(params, blocks, positives, negatives, ortho_reg=0.0, encoder="attention",
                             step=1e-5, floor=1e-4):
    """Worst elementwise relative error per parameter block, analytic vs central differences.

    The denominator is ``max(|analytic|, |numeric|, floor)`` so entries whose
    true gradient is ~0 are judged on absolute error ``floor * 1e-4``.
    """
    analytic = batch_loss_and_grads(params, blocks, positives, negatives, ortho_reg, encoder).grads
    worst = {}
    for name, arr in params.blocks().items():
        num = np.zeros_like(arr)
        for ix in np.ndindex(arr.shape):
            old = arr[ix]
            arr[ix] = old + step
            up = batch_loss_and_grads(params, blocks, positives, negatives, ortho_reg, encoder).loss
            arr[ix] = old - step
            down = batch_loss_and_grads(params, blocks, positives, negatives, ortho_reg, encoder).loss
            arr[ix] = old
            num[ix] = (up - down) / (2 * step)
        denom = np.maximum(np.maximum(np.abs(analytic[name]), np.abs(num)), floor)
        worst[name] = float((np.abs(analytic[name] - num) / denom).max())
    return worst


# ---------------------------------------------------------------- coherence

def window_counts(sentences, window):
    """Per-word and per-pair window counts by scanning every window of every sentence."""
    total, word, pair = 0, {}, {}
    for s in sentences:
        for t in range(len(s)):
            members = []
            for w in s[t:t + window + 1]:
                if w not in members:
                    members.append(w)
            total += 1
            for a in members:
                word[a] = word.get(a, 0) + 1
                for b in members:
                    if a != b:
                        pair[(a, b)] = pair.get((a, b), 0) + 1
    return total, word, pair


def npmi_oracle(sentences, window, terms, epsilon=1.0, mode="count"):
    total, word, pair = window_counts(sentences, window)
    eps = epsilon / total if mode == "count" else epsilon
    scores = []
    for i in range(len(terms)):
        for j in range(i + 1, len(terms)):
            a, b = terms[i], terms[j]
            pij = pair.get((a, b), 0) / total + eps
            pi, pj = word[a] / total, word[b] / total
            if -math.log(pij) <= 0:
                s = 1.0
            else:
                s = math.log(pij / (pi * pj)) / -math.log(pij)
            scores.append(max(-1.0, min(1.0, s)))
    return sum(scores) / len(scores)


def umass_oracle(docs, terms, epsilon=1.0):
    doc_sets = [set(d) for d in docs]
    total, count = 0.0, 0
    for i in range(1, len(terms)):
        for j in range(i):
            dj = sum(1 for d in doc_sets if terms[j] in d)
            dij = sum(1 for d in doc_sets if terms[i] in d and terms[j] in d)
            total += math.log((dij + epsilon) / dj)
            count += 1
    return total / count


def diversity_oracle(term_lists, top_n):
    seen = []
    for terms in term_lists:
        for t in terms[:top_n]:
            if t not in seen:
                seen.append(t)
    return len(seen) / (top_n * len(term_lists))


def ec_oracle(vectors, terms):
    sims = []
    for i in range(len(terms)):
        for j in range(i + 1, len(terms)):
            a, b = vectors[terms[i]], vectors[terms[j]]
            dot = sum(x * y for x, y in zip(a, b))
            na = math.sqrt(sum(x * x for x in a))
            nb = math.sqrt(sum(y * y for y in b))
            sims.append(dot / (na * nb))
    return sum(sims) / len(sims)


def f1_oracle(predicted, gold, labels):
    """Micro and macro F1 from a per-label confusion table built review by review."""
    table = {l: [0, 0, 0] for l in labels}   # tp, fp, fn
    for rid in gold:
        for l in labels:
            p, g = l in predicted[rid], l in gold[rid]
            if p and g:
                table[l][0] += 1
            elif p:
                table[l][1] += 1
            elif g:
                table[l][2] += 1

    def f1(tp, fp, fn):
        return 0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn)
    tp = sum(v[0] for v in table.values())
    fp = sum(v[1] for v in table.values())
    fn = sum(v[2] for v in table.values())
    macro = sum(f1(*table[l]) for l in labels) / len(labels)
    return f1(tp, fp, fn), macro


# ---------------------------------------------------------------- labeling

def label_oracle(review_sentences, lexicon_terms, names):
    """Set intersection per sentence, union per review. ``review_sentences`` maps id -> token lists."""
    out = {}
    for rid, sentences in review_sentences.items():
        labels = set()
        for tokens in sentences:
            for k, terms in enumerate(lexicon_terms):
                if set(tokens) & set(terms):
                    labels.add(names[k])
        out[rid] = labels
    return out
