import math

import numpy as np
import pytest

import cosettle


def test_closed_form_eigenvalues():
    mu = cosettle.optimal_eigs_closed_form([0.0, 2.0, 4.0, 5.0], 2.0)
    assert mu == pytest.approx([1.0, math.sqrt(0.5), 0.0, 0.0], abs=1e-15)


def test_margin_rows():
    assert cosettle.margin(0.3122, 0.1131) == pytest.approx(0.2783, abs=5e-4)
    assert cosettle.margin(0.5073, 0.1834) == pytest.approx(0.4523, abs=5e-4)
    assert cosettle.DEFAULT_GAMMA == 0.3


def test_softmax_rows_sum_to_one():
    logits = np.random.default_rng(0).normal(size=(5, 7))
    p = cosettle.softmax_rows(logits, 0.03)
    assert p.shape == (5, 7)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_sym_eig_reconstructs():
    a = np.array([[2.0, 1.0], [1.0, 2.0]])
    values, vectors = cosettle.sym_eig(a)
    assert values == pytest.approx([1.0, 3.0])
    np.testing.assert_allclose(vectors @ np.diag(values) @ vectors.T, a, atol=1e-12)


def test_surrogate_optimizer_matches_closed_form():
    sigma = [0.1, 0.7, 1.9, 2.5]
    expected = cosettle.optimal_eigs_closed_form(sigma, 1.0)
    got = cosettle.optimize_surrogate_linear(sigma, 1.0)
    assert got == pytest.approx(expected, abs=1e-3)


def test_delta_fixture_and_report():
    d = cosettle.delta_margin_closed_form([1.0, 3.0], 0.75)
    assert d["delta"] == pytest.approx(1.0 / 3.0)
    assert d["positivity_condition"]
    rep = cosettle.verify_theory([1.0, 3.0], 0.75, samples=20000)
    assert abs(rep["delta_empirical"] - 1.0 / 3.0) <= 0.05 / 3.0


def test_lemma1_signs():
    c, s = cosettle.lemma1_gradient_terms(0.5, 1.0, 1.0)
    assert c > 0 > s


def test_positional_augmentation_shape():
    grid = cosettle.sinusoidal_grid(7, 7, 16)
    assert grid.shape == (49, 16)
    np.testing.assert_array_equal(cosettle.pea_augment(grid, 7, 7, 0.0), grid)
    assert cosettle.pea_augment(grid, 7, 7, 0.25, seed=1).shape == (49, 16)


def test_gradcheck_small():
    rep = cosettle.gradcheck(instances=2)
    assert rep["passed"]
    assert len(rep["cases"]) == 6


def test_pipeline(tmp_path):
    corpus = tmp_path / "c.bin"
    ckpt = tmp_path / "w.bin"
    cosettle.generate_corpus_file(corpus, dim=8, n_h=2, n_w=2, frames=4, videos=10, seed=3)
    history = cosettle.train(corpus, ckpt, epochs=2, add_positional=True)
    assert [r["kind"] for r in history].count("epoch") == 2
    m = cosettle.evaluate(corpus, ckpt)
    assert m["gamma"] == 0.3
    assert m["margin"] == pytest.approx(m["d_inter"] - 0.3 * m["d_intra"], abs=1e-12)


def test_errors_map_to_python_exceptions(tmp_path):
    bad = tmp_path / "junk.bin"
    bad.write_bytes(b"not a corpus at all")
    with pytest.raises(cosettle.FormatError):
        cosettle.evaluate(bad)
    with pytest.raises(cosettle.ParameterError):
        cosettle.optimal_eigs_closed_form([1.0], 0.0)
    with pytest.raises(cosettle.ParameterError):
        cosettle.train(bad, tmp_path / "w.bin", learning_rate=1)
    assert issubclass(cosettle.ShapeError, cosettle.CosettleError)
