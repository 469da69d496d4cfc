import numpy as np
import pytest
from oracles import finite_difference_errors

from muscad.aspect_model import init_params
from muscad.clustering import build_aspect_matrix, candidate_words, kmeans, unit_rows
from muscad.corpus import TokenizedCorpus, TokenizerConfig, build_corpus_from_reviews
from muscad.embedding import CbowConfig, EmbeddingMatrix, train_cbow
from muscad.errors import ConfigError, TrainingError
from muscad.synthetic import planted_topic_corpus, purity
from muscad.training import (SGD, TrainConfig, batch_loss_and_grads, hinge_loss, ortho_penalty, predict,
                             sample_negatives, sentence_blocks, train)


def rand_unit(rng, d):
    v = rng.normal(size=d)
    return v / np.linalg.norm(v)


def test_hinge_margin_satisfied_exactly():
    z = np.array([1.0, 0.0, 0.0])
    assert hinge_loss(z, z, [np.array([0.0, 1.0, 0.0])]) == 0.0


def test_hinge_unit_loss():
    assert hinge_loss(np.array([1.0, 0.0]), np.array([0.0, 1.0]), [np.array([1.0, 0.0])]) == 1.0


def test_hinge_matches_direct_sum():
    rng = np.random.default_rng(0)
    z, r = rand_unit(rng, 5), rand_unit(rng, 5)
    negs = [rand_unit(rng, 5) for _ in range(3)]
    direct = 0.0
    for zn in negs:
        direct += max(0.0, 1.0 - float(np.dot(z, r)) + float(np.dot(zn, r)))
    assert hinge_loss(z, r, negs) == pytest.approx(direct, abs=1e-14)
    with pytest.raises(ValueError):
        hinge_loss(z, r, [])


def test_sample_negatives_examples():
    rng = np.random.default_rng(0)
    assert sample_negatives(2, 1, 0, rng) == [1]
    got = sample_negatives(6, 5, 3, rng)
    assert sorted(got) == [0, 1, 2, 4, 5]
    with pytest.raises(ValueError):
        sample_negatives(3, 3, 0, rng)


def test_sample_negatives_uniform_chi_square():
    from scipy.stats import chisquare
    rng = np.random.default_rng(1)
    counts = np.zeros(10)
    for _ in range(1000):
        for j in sample_negatives(10, 1, 4, rng):
            counts[j] += 1
    assert counts[4] == 0
    others = np.delete(counts, 4)
    expected = 1000 / 9
    assert np.all(np.abs(others - expected) <= 3 * np.sqrt(expected * (1 - 1 / 9)))
    assert chisquare(others).pvalue > 1e-3


@pytest.mark.parametrize("encoder,ortho", [("mean", 0.0), ("attention", 0.3), ("mean", 0.5)])
def test_gradients_other_variants(encoder, ortho):
    rng = np.random.default_rng(7)
    params = init_params(8, 2, unit_rows(rng.normal(size=(3, 8))), seed=7)
    blocks = [rng.normal(size=(int(rng.integers(1, 5)), 8)) for _ in range(5)]
    worst = finite_difference_errors(params, blocks, [0, 1], [[2, 3], [4, 0]], ortho, encoder)
    assert max(worst.values()) < 1e-4, worst


def test_ortho_penalty_zero_for_orthonormal_rows():
    value, grad = ortho_penalty(np.eye(3, 5) * 4.0, 1.0)
    assert value == pytest.approx(0.0) and np.allclose(grad, 0.0)


def tiny_corpus(n=12, seed=0):
    rng = np.random.default_rng(seed)
    sentences = [list(rng.integers(0, 6, size=int(rng.integers(1, 5)))) for _ in range(n)]
    corpus = TokenizedCorpus(sentences, [f"r{i}" for i in range(n)], [(i, i + 1) for i in range(n)], [""] * n)
    emb = EmbeddingMatrix(rng.normal(size=(6, 8)))
    return corpus, emb, init_params(8, 2, unit_rows(rng.normal(size=(3, 8))), seed)


def test_zero_learning_rate_leaves_parameters_unchanged():
    corpus, emb, params = tiny_corpus()
    for opt in ("adam", "sgd"):
        trained, report = train(params, corpus, emb, TrainConfig(learning_rate=0.0, epochs=1, m_negatives=3,
                                                                 optimizer=opt))
        for name, a in params.blocks().items():
            assert np.array_equal(a, trained.blocks()[name])
        assert len(report.epoch_loss) == 1


def test_single_sentence_corpus_rejected():
    corpus = TokenizedCorpus([[0, 1]], ["r"], [(0, 1)], [""])
    _, emb, params = tiny_corpus()
    with pytest.raises(ConfigError):
        train(params, corpus, emb, TrainConfig())


def test_negative_count_clamped_on_small_corpus(caplog):
    corpus, emb, params = tiny_corpus(n=5)
    _, report = train(params, corpus, emb, TrainConfig(m_negatives=20, epochs=1))
    assert report.m_negatives == 4
    assert "negatives" in caplog.text


def test_training_is_seeded_and_reduces_loss():
    corpus, emb, params = tiny_corpus(n=30, seed=3)
    cfg = TrainConfig(m_negatives=5, epochs=6, learning_rate=0.02, seed=4)
    a, ra = train(params, corpus, emb, cfg)
    b, rb = train(params, corpus, emb, cfg)
    assert ra.epoch_records() == rb.epoch_records()
    assert all(np.array_equal(x, y) for x, y in zip(a.blocks().values(), b.blocks().values()))
    assert ra.epoch_loss[-1] < ra.epoch_loss[0]
    assert all(0.0 <= f <= 1.0 for f in ra.zero_loss_fraction)


def test_non_finite_gradient_names_block():
    corpus, emb, params = tiny_corpus()
    params.wp[0, 0] = np.nan
    with pytest.raises(TrainingError, match="wp"):
        train(params, corpus, emb, TrainConfig(m_negatives=3, epochs=1))


def test_batch_shares_sentence_between_roles():
    rng = np.random.default_rng(2)
    params = init_params(4, 2, unit_rows(rng.normal(size=(2, 4))), 0)
    blocks = [rng.normal(size=(2, 4)) for _ in range(3)]
    res = batch_loss_and_grads(params, blocks, [0, 1], [[1], [0]])
    assert res.triplets == 2 and len(res.per_sentence) == 2


def test_sgd_step_direction():
    _, _, params = tiny_corpus()
    before = params.wp.copy()
    grads = {name: np.ones_like(a) for name, a in params.blocks().items()}
    SGD(params, 0.5).step(params, grads)
    assert np.allclose(params.wp, before - 0.5)


@pytest.mark.slow
def test_planted_topics_recovered_by_argmax():
    pc = planted_topic_corpus(seed=0)
    corpus, vocab = build_corpus_from_reviews(pc.reviews, TokenizerConfig(stopwords=frozenset({"."}), min_count=5))
    emb = train_cbow(corpus, vocab, CbowConfig(dim=32, epochs=20, seed=0))
    clusters = kmeans(emb.vectors, 3, candidate_words(vocab.frequency, 20), seed=0)
    params = init_params(32, 4, build_aspect_matrix(clusters), seed=0)
    trained, _ = train(params, corpus, emb, TrainConfig(learning_rate=1e-2, seed=0))
    idx, blocks = sentence_blocks(corpus, emb)
    predicted = predict(trained, blocks).argmax(1)
    assert purity(predicted, np.array(pc.sentence_topics)[idx]) >= 0.9
