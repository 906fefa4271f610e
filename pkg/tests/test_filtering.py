from __future__ import annotations

import random

import pytest

from sddkit.corpus import Decision, Label
from sddkit.filtering import FilterConfig, Tier, annotator_accuracy, filter_corpus
from conftest import make_annotation, make_sample


def planted_campaign(n_correct_by_annotator: dict[str, int], n: int = 20):
    """Each annotator labels the same n samples, correct on the first k."""
    samples = [make_sample(i) for i in range(n)]
    annotations = []
    for annotator_id, n_correct in n_correct_by_annotator.items():
        for i, sample in enumerate(samples):
            truth_genuine = sample.label is Label.BONA_FIDE
            say_genuine = truth_genuine if i < n_correct else not truth_genuine
            annotations.append(
                make_annotation(
                    annotator_id,
                    sample.id,
                    Decision.GENUINE if say_genuine else Decision.ARTIFICIAL,
                    () if say_genuine else (9,),
                )
            )
    return samples, annotations


def test_planted_accuracies_yield_tiers_and_34_retained():
    samples, annotations = planted_campaign({"a-hi": 18, "a-mid": 16, "a-low": 14})
    result = filter_corpus(annotations, samples)
    tiers = {aid: rec.tier for aid, rec in result.report.items()}
    assert tiers == {"a-hi": Tier.HIGH, "a-mid": Tier.MEDIUM, "a-low": Tier.EXCLUDED}
    # 18 + 16 correct annotations survive; the excluded annotator contributes none.
    assert len(result.retained) == 34
    assert all(a.annotator_id != "a-low" for a in result.retained)


def test_retained_annotations_all_agree_with_truth():
    samples, annotations = planted_campaign({"a-hi": 18})
    corpus = {s.id: s.label for s in samples}
    result = filter_corpus(annotations, samples)
    assert all(a.agrees_with(corpus[a.sample_id]) for a in result.retained)


def test_accuracy_report_values():
    samples, annotations = planted_campaign({"a-mid": 16})
    report = annotator_accuracy(annotations, samples)
    record = report["a-mid"]
    assert record.n_annotations == 20 and record.n_correct == 16
    assert record.accuracy == pytest.approx(0.8)


def test_boundary_accuracies():
    cfg = FilterConfig()
    assert cfg.tier_for(0.85) is Tier.HIGH
    assert cfg.tier_for(0.8499999) is Tier.MEDIUM
    assert cfg.tier_for(0.75) is Tier.MEDIUM
    assert cfg.tier_for(0.7499999) is Tier.EXCLUDED


def test_filtering_is_idempotent():
    samples, annotations = planted_campaign({"a-hi": 18, "a-mid": 16, "a-low": 14})
    once = filter_corpus(annotations, samples)
    twice = filter_corpus(once.retained, samples)
    assert twice.retained == once.retained


def test_threshold_monotonicity():
    samples, annotations = planted_campaign(
        {"a1": 20, "a2": 18, "a3": 16, "a4": 14, "a5": 11}
    )
    sizes = []
    for min_accuracy in (0.55, 0.7, 0.75, 0.8, 0.9, 1.0):
        cfg = FilterConfig(min_accuracy=min_accuracy, high_tier_accuracy=max(min_accuracy, 0.85))
        sizes.append(len(filter_corpus(annotations, samples, cfg).retained))
    assert sizes == sorted(sizes, reverse=True)


def test_review_manifest_is_seeded_and_capped():
    samples, annotations = planted_campaign({"a-hi": 18, "a-mid": 16}, n=80)
    result = filter_corpus(annotations, samples)
    again = filter_corpus(annotations, samples)
    assert result.review_manifest == again.review_manifest
    for chosen in result.review_manifest.values():
        assert 30 <= len(chosen) <= 50


def test_review_manifest_smaller_pool_takes_everything():
    samples, annotations = planted_campaign({"a-hi": 18})
    result = filter_corpus(annotations, samples)
    assert len(result.review_manifest["a-hi"]) == 18


def test_zero_annotation_annotators_absent():
    samples, annotations = planted_campaign({"a-hi": 18})
    report = annotator_accuracy(annotations, samples)
    assert "ghost" not in report


def test_random_campaign_counts_match_brute_force():
    rng = random.Random(909)
    samples = [make_sample(i) for i in range(40)]
    truth = {s.id: s.label for s in samples}
    annotations = []
    for a in range(6):
        annotator_id = f"r{a}"
        for sample in rng.sample(samples, 25):
            say_genuine = rng.random() < 0.6
            annotations.append(
                make_annotation(
                    annotator_id,
                    sample.id,
                    Decision.GENUINE if say_genuine else Decision.ARTIFICIAL,
                    () if say_genuine else (rng.randint(1, 13),),
                )
            )
    cfg = FilterConfig()
    result = filter_corpus(annotations, samples, cfg)

    # brute force: recompute accuracies and the retained set by hand
    def key(items):
        return sorted((a.annotator_id, a.sample_id) for a in items)

    per = {}
    for ann in annotations:
        per.setdefault(ann.annotator_id, []).append(ann)
    expected = []
    for group in per.values():
        correct = [a for a in group if a.agrees_with(truth[a.sample_id])]
        if len(correct) / len(group) >= cfg.min_accuracy:
            expected.extend(correct)
    assert key(result.retained) == key(expected)
