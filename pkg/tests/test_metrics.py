import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import diversity_oracle, ec_oracle, f1_oracle, npmi_oracle, umass_oracle

from muscad.corpus import TokenizedCorpus, compute_cooc_stats
from muscad.metrics import (coherence_report, diversity, embedding_coherence, format_table, multilabel_f1, npmi,
                            rank_average, umass)


def corpus_from(sentences, reviews=None):
    reviews = reviews or [(i, i + 1) for i in range(len(sentences))]
    return TokenizedCorpus(sentences, [f"r{i}" for i in range(len(reviews))], reviews, [""] * len(sentences))


def stats_of(sentences, window=10, reviews=None):
    return compute_cooc_stats(corpus_from(sentences, reviews), window)


# ---------------------------------------------------------------- NPMI

def test_npmi_perfect_cooccurrence_approaches_one():
    # 0 and 1 sit side by side mid-sentence, so they share every window that holds
    # either except the two at the edges of the pair; fillers 2..199 pad the rest
    rng = np.random.default_rng(0)
    filler = lambda n: [int(w) for w in rng.integers(2, 200, size=n)]
    sentences = [filler(49) + [0, 1] + filler(48) for _ in range(10)] + [filler(10)]
    stats = stats_of(sentences, window=10)
    assert stats.total_windows == 1000
    assert npmi(stats, [0, 1]) > 0.9


def test_npmi_disjoint_words_negative():
    sentences = [[0, 2]] * 300 + [[1, 3]] * 300
    assert npmi(stats_of(sentences, 1), [0, 1]) < 0


def test_npmi_matches_count_formula():
    rng = np.random.default_rng(3)
    sentences = [list(map(int, rng.integers(0, 8, size=int(rng.integers(2, 9))))) for _ in range(30)]
    stats = stats_of(sentences, window=3)
    topic = [0, 3, 5, 6, 7]
    for mode in ("count", "prob"):
        assert npmi(stats, topic, 1.0, mode) == pytest.approx(npmi_oracle(sentences, 3, topic, 1.0, mode),
                                                              abs=1e-12)


def test_npmi_errors():
    stats = stats_of([[0, 1]])
    with pytest.raises(ValueError):
        npmi(stats, [0])
    with pytest.raises(ValueError):
        npmi(stats, [0, 5])


@settings(max_examples=80, deadline=None)
@given(st.lists(st.lists(st.integers(0, 5), min_size=1, max_size=8), min_size=1, max_size=12),
       st.integers(1, 4), st.sampled_from(["count", "prob"]), st.floats(1e-6, 2.0))
def test_npmi_bounded(sentences, window, mode, eps):
    stats = stats_of(sentences, window)
    present = sorted(stats.word_window_counts)
    if len(present) < 2:
        return
    assert -1.0 <= npmi(stats, present, eps, mode) <= 1.0


# ---------------------------------------------------------------- UMass

def test_umass_perfect_cooccurrence_near_zero():
    docs = [[0, 1]] * 12 + [[2]] * 5
    stats = stats_of(docs, 1)
    value = umass(stats, [0, 1])
    assert value == pytest.approx(math.log(13 / 12))
    assert value > math.log(1) - 0.1


def test_umass_never_cooccurring():
    docs = [[0]] * 10 + [[1]] * 10
    assert umass(stats_of(docs, 1), [0, 1]) == pytest.approx(math.log(1 / 10))


def test_umass_conditions_on_higher_ranked_term():
    docs = [[0, 1], [0], [0], [0], [1]]
    # only pair: w_i = 1 (rank 2) given w_j = 0 (rank 1): log((1 + 1) / 4)
    assert umass(stats_of(docs, 1), [0, 1]) == pytest.approx(math.log(2 / 4))
    assert umass(stats_of(docs, 1), [1, 0]) == pytest.approx(math.log(2 / 2))


def test_umass_matches_document_formula():
    rng = np.random.default_rng(4)
    sentences = [list(map(int, rng.integers(0, 9, size=int(rng.integers(1, 6))))) for _ in range(40)]
    reviews = [(i, i + 2) for i in range(0, 40, 2)]
    stats = stats_of(sentences, 2, reviews)
    docs = [sum(sentences[a:b], []) for a, b in reviews]
    topic = [8, 1, 4, 2, 0]
    assert umass(stats, topic) == pytest.approx(umass_oracle(docs, topic), abs=1e-12)


def test_umass_missing_document_names_term():
    stats = stats_of([[0, 1]])
    with pytest.raises(ValueError, match="7"):
        umass(stats, [7, 0])


# ---------------------------------------------------------------- diversity and EC

def test_diversity_examples():
    assert diversity([["a", "b"], ["c", "d"], ["e", "f"]], 2) == 1.0
    assert diversity([["a", "b"], ["b", "c"], ["c", "a"]], 2) == 0.5
    with pytest.raises(ValueError):
        diversity([["a"]], 2)


def test_embedding_coherence_examples():
    same = np.tile([1.0, 2.0, 3.0], (4, 1))
    assert embedding_coherence(same, [0, 1, 2, 3]) == pytest.approx(1.0)
    assert embedding_coherence(np.eye(2), [0, 1]) == 0.0
    vecs = np.random.default_rng(0).normal(size=(4, 5))
    assert embedding_coherence(vecs, [0, 1, 2, 3]) == pytest.approx(ec_oracle(vecs.tolist(), [0, 1, 2, 3]),
                                                                    abs=1e-14)
    with pytest.raises(ValueError, match="zero"):
        embedding_coherence(np.array([[0.0, 0.0], [1.0, 0.0]]), [0, 1], tokens=["nil", "x"])


# ---------------------------------------------------------------- report

def test_coherence_report_summary():
    rng = np.random.default_rng(1)
    sentences = [list(map(int, rng.integers(0, 10, size=6))) for _ in range(30)]
    stats = stats_of(sentences, 3)
    emb = rng.normal(size=(10, 4))
    rep = coherence_report(stats, emb, [[0, 1, 2, 3], [4, 5, 6, 7]], top_n=3)
    assert rep.top_n_used == 3 and len(rep.npmi) == 2
    assert rep.mean_npmi == pytest.approx(np.mean([npmi(stats, [0, 1, 2]), npmi(stats, [4, 5, 6])]))
    assert rep.diversity == diversity_oracle([[0, 1, 2], [4, 5, 6]], 3) == 1.0
    assert set(rep.to_json()) >= {"npmi", "umass", "ec", "diversity", "per_aspect", "epsilon_mode"}


# ---------------------------------------------------------------- F1

def test_f1_perfect_and_empty():
    gold = {"a": {"x"}, "b": {"x", "y"}}
    rep = multilabel_f1(gold, gold, ["x", "y"])
    assert rep.micro_f1 == rep.macro_f1 == 1.0
    assert multilabel_f1({"a": set(), "b": set()}, gold, ["x", "y"]).micro_f1 == 0.0


def test_f1_hand_enumerated_confusion():
    gold = {"r0": {"A"}, "r1": {"A", "B"}, "r2": {"C"}, "r3": set(), "r4": {"B"},
            "r5": {"A", "C"}, "r6": {"B", "C"}, "r7": {"A"}, "r8": set(), "r9": {"C"}}
    pred = {"r0": {"A"}, "r1": {"A"}, "r2": {"B"}, "r3": {"A"}, "r4": {"B"},
            "r5": {"A", "C"}, "r6": {"C"}, "r7": set(), "r8": set(), "r9": {"C", "B"}}
    # A: tp r0 r1 r5 = 3, fp r3 = 1, fn r7 = 1 -> F1 6/8
    # B: tp r4 = 1, fp r2 r9 = 2, fn r1 r6 = 2 -> F1 2/6
    # C: tp r5 r6 r9 = 3, fp 0, fn r2 = 1 -> F1 6/7
    rep = multilabel_f1(pred, gold, ["A", "B", "C"])
    assert rep.per_label["A"]["f1"] == pytest.approx(6 / 8)
    assert rep.per_label["B"]["f1"] == pytest.approx(2 / 6)
    assert rep.per_label["C"]["f1"] == pytest.approx(6 / 7)
    assert rep.micro_f1 == pytest.approx(2 * 7 / (2 * 7 + 3 + 4))
    assert rep.macro_f1 == pytest.approx((6 / 8 + 2 / 6 + 6 / 7) / 3)


def test_f1_zero_support_and_id_mismatch():
    gold = {"a": {"x"}}
    assert multilabel_f1(gold, gold, ["x", "z"]).macro_f1 == 0.5
    assert multilabel_f1(gold, gold, ["x", "z"], exclude_zero_support=True).macro_f1 == 1.0
    with pytest.raises(ValueError, match="b"):
        multilabel_f1({"a": set(), "b": set()}, gold, ["x"])


@settings(max_examples=60, deadline=None)
@given(st.dictionaries(st.text("ab", min_size=1, max_size=3),
                       st.tuples(st.sets(st.sampled_from("PQR")), st.sets(st.sampled_from("PQR"))), min_size=1))
def test_f1_matches_oracle(rows):
    pred = {k: v[0] for k, v in rows.items()}
    gold = {k: v[1] for k, v in rows.items()}
    rep = multilabel_f1(pred, gold, list("PQR"))
    micro, macro = f1_oracle(pred, gold, list("PQR"))
    assert rep.micro_f1 == pytest.approx(micro, abs=1e-15)
    assert rep.macro_f1 == pytest.approx(macro, abs=1e-15)
    assert 0.0 <= rep.micro_f1 <= 1.0


# ---------------------------------------------------------------- rank averaging

def test_rank_dominance():
    table = {"A": {"npmi": 0.3, "umass": -0.1, "diversity": 1.0, "ec": 0.5},
             "B": {"npmi": 0.1, "umass": -2.0, "diversity": 0.5, "ec": 0.2}}
    assert rank_average(table) == {"A": 1.0, "B": 2.0}


def test_rank_tie_conventions():
    table = {"A": {"npmi": 0.3}, "B": {"npmi": 0.3}}
    assert rank_average(table, ties="average") == {"A": 1.5, "B": 1.5}
    assert rank_average(table) == {"A": 1.0, "B": 1.0}


HOTEL = {  # model: (NPMI, UMass, Diversity, EC, reported Rank Avg)
    "LDA": (0.026, -3.833, 1.000, None, 5.7), "BTM": (-0.337, -18.132, 0.143, None, 9.7),
    "NMF": (0.038, -3.770, 0.671, None, 7.0), "CTM": (0.195, -0.229, 0.871, 0.499, 3.3),
    "BERTopic": (0.173, -0.480, 0.692, 0.550, 4.3), "Top2Vec": (0.025, -0.683, 0.094, 0.502, 7.3),
    "KeyBERT": (0.087, -0.382, 0.707, 0.266, 5.3), "SimCSE": (-0.018, -0.534, 0.343, 0.520, 6.5),
    "ABAE": (0.242, -0.266, 0.863, 0.486, 3.8), "MUSCAD": (0.281, -0.220, 1.000, 0.568, 1.0),
}


def test_rank_average_reproduces_reference_hotel_ranks():
    table = {m: dict(zip(("npmi", "umass", "diversity", "ec"), v[:4])) for m, v in HOTEL.items()}
    got = rank_average(table)
    half_up = lambda x: math.floor(x * 10 + 0.5) / 10
    for model, values in HOTEL.items():
        assert half_up(got[model]) == values[4], model


def test_rank_hand_computed_three_models():
    table = {"A": {"npmi": 0.2, "umass": -0.5, "ec": 0.4},
             "B": {"npmi": 0.1, "umass": -0.1, "ec": None},
             "C": {"npmi": 0.3, "umass": -3.0, "ec": 0.6}}
    # npmi C1 A2 B3; umass (closest to 0) B1 A2 C3; ec C1 A2, B skipped
    assert rank_average(table) == {"A": 2.0, "B": 2.0, "C": pytest.approx(5 / 3)}
    with pytest.raises(ValueError):
        rank_average({"A": {"npmi": 1.0}})


def test_format_table_has_dash_for_missing():
    text = format_table({"A": {"npmi": 0.1, "umass": -1.0, "diversity": 1.0, "ec": None}}, {"A": 1.0})
    assert "Rank Avg" in text and " - " in text.splitlines()[2] + " "


def test_format_table_rounds_rank_half_up():
    text = format_table({"CTM": {"npmi": 0.195}}, {"CTM": 3.25})
    assert text.splitlines()[2].endswith("3.3")
