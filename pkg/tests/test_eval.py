import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from varndrr.data import EncodedInstance, EncodedSet
from varndrr.eval import (
    METRICS_CSV_HEADER, compute_metrics, implied_confusions, metrics_csv, metrics_from_counts,
    predict, predict_set, reference_rows, render_table, evaluate,
)
from varndrr.model import init_params, zero_params
from varndrr.numerics import make_rng

from conftest import TINY, random_instance


def test_perfect_predictions():
    m = compute_metrics([True, False, True, False], [True, False, True, False])
    assert (m.accuracy, m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0, 1.0)


def test_hand_counted_case():
    m = compute_metrics([True, True, True, False, False], [True, False, True, True, False])
    assert (m.tp, m.fp, m.fn, m.tn) == (2, 1, 1, 1)
    assert m.accuracy == pytest.approx(0.6)
    assert m.precision == pytest.approx(2 / 3)
    assert m.recall == pytest.approx(2 / 3)
    assert m.f1 == pytest.approx(2 / 3)


def test_counts_without_true_negatives():
    m = metrics_from_counts(2, 1, 1, 0)
    assert m.precision == pytest.approx(2 / 3) and m.recall == pytest.approx(2 / 3)
    assert m.f1 == pytest.approx(2 / 3) and m.accuracy == 0.5


def test_all_positive_predictions():
    m = compute_metrics([True] * 10, [True] * 3 + [False] * 7)
    assert m.precision == pytest.approx(0.3) and m.recall == 1.0
    assert m.f1 == pytest.approx(0.6 / 1.3)


def test_no_positive_predictions_gives_zero_f1():
    m = compute_metrics([False] * 4, [True, False, False, True])
    assert m.precision == 0.0 and m.recall == 0.0 and m.f1 == 0.0
    assert m.accuracy == 0.5


def test_input_validation():
    with pytest.raises(ValueError):
        compute_metrics([True], [True, False])
    with pytest.raises(ValueError):
        compute_metrics([], [])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=50), st.randoms())
def test_metrics_ignore_instance_order(pairs, rnd):
    a = compute_metrics(*zip(*pairs))
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    assert compute_metrics(*zip(*shuffled)) == a
    assert 0 <= a.f1 <= 1 and 0 <= a.accuracy <= 1


def test_f1_increases_with_precision_at_fixed_recall():
    f1 = [metrics_from_counts(10, fp, 5, 50).f1 for fp in (20, 10, 5, 0)]
    assert f1 == sorted(f1) and len(set(f1)) == 4


def test_published_rows_are_bundled():
    rows = reference_rows()
    assert len(rows) == 20
    exp = {r.model: r for r in reference_rows("EXP")}
    assert exp["VarNDRR"].f1 == 71.48 and exp["SCNN"].r == 91.11
    assert exp["R&X"].acc is None


@pytest.mark.parametrize("task, n_pos, expected", [
    ("EXP", 574, (559, 431, 15, 41)),
    ("CON", 279, (247, 451, 32, 316)),
    ("TEM", 85, (83, 394, 2, 567)),
])
def test_published_rows_imply_a_single_confusion_matrix(task, n_pos, expected):
    row = {r.model: r for r in reference_rows(task)}["VarNDRR"]
    sols = implied_confusions(row, n_pos, range(1040, 1091))
    assert sols == [expected]
    assert sum(expected) == 1046


def test_published_comparison_row_has_no_consistent_counts():
    row = {r.model: r for r in reference_rows("COM")}["VarNDRR"]
    assert implied_confusions(row, 152, range(1000, 1200)) == []


def test_zero_model_predicts_positive():
    # uniform p(y|z): the tie goes to the target relation
    p = zero_params(TINY)
    x1, x2, y = random_instance(np.random.default_rng(0))
    assert predict(p, EncodedInstance(x1, x2, y)) is True


def _small_set(n=12, seed=0):
    rng = np.random.default_rng(seed)
    idx1 = [np.flatnonzero(rng.random(7) < 0.4) for _ in range(n)]
    idx2 = [np.flatnonzero(rng.random(7) < 0.4) for _ in range(n)]
    return EncodedSet(idx1, idx2, rng.random(n) < 0.5, 7)


def test_predict_set_matches_single_predictions(tiny_params):
    data = _small_set()
    labels, probs = predict_set(tiny_params, data, batch_size=5)
    for i in range(len(data)):
        assert labels[i] == predict(tiny_params, data.instance(i))
    assert np.all((probs > 0) & (probs < 1))
    again, probs2 = predict_set(tiny_params, data)
    np.testing.assert_array_equal(labels, again)
    np.testing.assert_array_equal(probs, probs2)


def test_prediction_never_reads_the_posterior(tiny_params):
    data = _small_set(30, seed=1)
    before = predict_set(tiny_params, data)
    post = tiny_params.phi.posterior
    post.W_h1 += 5.0
    post.W_muy[...] = np.nan
    post.b_sig += 3.0
    after = predict_set(tiny_params, data)
    np.testing.assert_array_equal(before[0], after[0])
    np.testing.assert_array_equal(before[1], after[1])


def test_evaluate_against_compute_metrics():
    p = init_params(TINY, make_rng(2), std=0.8)
    data = _small_set(20, seed=2)
    labels, _ = predict_set(p, data)
    assert evaluate(p, data) == compute_metrics(labels, data.positive)


def test_render_table_and_csv():
    m = metrics_from_counts(559, 431, 15, 41)
    table = render_table(m, "EXP")
    assert "71.48" in table and "VarNDRR" in table and "SCNN" in table
    text = metrics_csv(m, "EXP", "test")
    header, row = text.strip().split("\n")
    assert header.split(",") == METRICS_CSV_HEADER
    assert row.split(",") == ["EXP", "test", "1046", "559", "431", "15", "41", "57.36", "56.46", "97.39", "71.48"]
