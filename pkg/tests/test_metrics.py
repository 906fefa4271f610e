from __future__ import annotations

import random

import pytest

from sddkit.corpus import Label
from sddkit.metrics import (
    ConfusionCounts,
    EmptyInput,
    RaggedRuns,
    aggregate_judge_scores,
    detection_metrics,
    jaccard,
    mean_jaccard,
    tag_histogram,
)

B, S = Label.BONA_FIDE, Label.SPOOF


def test_worked_detection_example():
    truths = [B, B, S, S, S]
    preds = [B, S, B, S, S]
    report = detection_metrics(list(zip(preds, truths)))
    assert report.counts == ConfusionCounts(tp=1, fp=1, tn=2, fn=1)
    assert report.accuracy == pytest.approx(0.6)
    assert report.balanced_accuracy == pytest.approx(7 / 12)
    assert report.f1 == pytest.approx(0.5)


def test_balanced_accuracy_is_mean_of_recalls():
    pairs = [(B, B)] * 9 + [(S, B)] * 1 + [(S, S)] * 3 + [(B, S)] * 7
    report = detection_metrics(pairs)
    assert report.recall_bonafide == pytest.approx(0.9)
    assert report.recall_spoof == pytest.approx(0.3)
    assert report.balanced_accuracy == pytest.approx(0.6)


def test_degenerate_all_spoof():
    report = detection_metrics([(S, S)] * 4)
    assert report.accuracy == 1.0
    assert report.balanced_accuracy is None
    assert report.f1 is None
    assert set(report.undefined) == {"balanced_accuracy", "f1", "recall_bonafide"}


def test_empty_pairs_rejected():
    with pytest.raises(EmptyInput):
        detection_metrics([])


def test_jaccard_table_fixtures():
    assert jaccard({5, 10}, {1, 2, 10}) == pytest.approx(0.25)
    assert jaccard({1, 9}, {1, 2, 9}) == pytest.approx(2 / 3)
    assert jaccard({4, 9}, {4, 9}) == 1.0
    assert jaccard(set(), set()) == 1.0
    assert jaccard({1}, set()) == 0.0


def test_jaccard_rejects_out_of_taxonomy_tags():
    with pytest.raises(ValueError):
        jaccard({1, 99}, {1})
    with pytest.raises(ValueError):
        jaccard({1}, {0})


def test_jaccard_properties_random():
    rng = random.Random(55)
    for _ in range(2000):
        y = set(rng.sample(range(1, 15), rng.randint(0, 6)))
        yhat = set(rng.sample(range(1, 15), rng.randint(0, 6)))
        j = jaccard(y, yhat)
        assert j == jaccard(yhat, y)
        assert 0.0 <= j <= 1.0
        assert jaccard(y, y) == 1.0
        if y and yhat and not (y & yhat):
            assert j == 0.0


def test_mean_jaccard():
    pairs = [({5, 10}, {1, 2, 10}), ({1, 9}, {1, 2, 9}), ({4, 9}, {4, 9})]
    assert mean_jaccard(pairs) == pytest.approx((0.25 + 2 / 3 + 1.0) / 3)
    with pytest.raises(EmptyInput):
        mean_jaccard([])


def test_judge_aggregate_population_std():
    agg = aggregate_judge_scores([[5, 6, 5, 6, 6]])
    assert agg.mean == pytest.approx(5.6)
    assert agg.std == pytest.approx(0.4898979485566356)
    assert agg.n_runs == 1


def test_judge_aggregate_flattens_runs():
    agg = aggregate_judge_scores([[4, 8], [6, 6]])
    assert agg.mean == pytest.approx(6.0)
    assert agg.n_runs == 2
    with pytest.raises(RaggedRuns):
        aggregate_judge_scores([[1, 2], [3]])
    with pytest.raises(EmptyInput):
        aggregate_judge_scores([])


def test_tag_histogram_covers_all_14_keys():
    hist = tag_histogram([[2, 3], [3], [14]])
    assert sorted(hist) == list(range(1, 15))
    assert hist[3] == 2 and hist[2] == 1 and hist[14] == 1 and hist[1] == 0
