from __future__ import annotations

import random
from collections import Counter

import pytest

from sddkit.corpus import (
    Annotation,
    ArtificialWithoutReasons,
    AudioSample,
    Corpus,
    Decision,
    DuplicateId,
    EmptyComment,
    GenuineWithReasons,
    Label,
    MalformedRecord,
    MissingField,
    REASON_TAXONOMY,
    ReasonTag,
    Split,
    SplitSpec,
    UnknownSample,
    annotation_from_record,
    annotation_to_record,
    ingest_annotations,
    ingest_samples,
    make_splits,
    sample_from_record,
    sample_to_record,
    write_jsonl,
)
from conftest import make_annotation, make_sample, write_jsonl_file


def test_label_tokens():
    assert Label.from_token("Real") is Label.BONA_FIDE
    assert Label.from_token("Fake") is Label.SPOOF
    assert Label.BONA_FIDE.token == "Real"
    assert Label.SPOOF.token == "Fake"
    with pytest.raises(ValueError):
        Label.from_token("real")


def test_taxonomy_is_the_fixed_14_item_list():
    assert len(REASON_TAXONOMY) == 14
    assert REASON_TAXONOMY[1] == "Lack of fluency or coherence"
    assert REASON_TAXONOMY[3] == "Uniform pauses between words throughout the audio"
    assert REASON_TAXONOMY[10] == "Excessively fast speech"
    assert REASON_TAXONOMY[13] == "Word-by-word repetition in cases of tautology"
    assert REASON_TAXONOMY[14] == "Other (please specify)"


def test_reason_tag_validation():
    assert ReasonTag(4).canonical_name == "Unusual intonation patterns"
    assert ReasonTag(14, "metallic ringing").other_text == "metallic ringing"
    with pytest.raises(ValueError):
        ReasonTag(0)
    with pytest.raises(ValueError):
        ReasonTag(15)
    with pytest.raises(ValueError):
        ReasonTag(2, "free text on a non-other tag")
    with pytest.raises(ValueError):
        ReasonTag(14, "   ")


def test_annotation_invariants():
    with pytest.raises(GenuineWithReasons):
        make_annotation("a1", "s000", Decision.GENUINE, (2,))
    with pytest.raises(ArtificialWithoutReasons):
        make_annotation("a1", "s001", Decision.ARTIFICIAL, ())
    with pytest.raises(EmptyComment):
        make_annotation("a1", "s001", Decision.ARTIFICIAL, (2,), comment="   ")
    ann = make_annotation("a1", "s001", Decision.ARTIFICIAL, (9, 4))
    assert ann.reason_ids == frozenset({4, 9})
    assert ann.agrees_with(Label.SPOOF) and not ann.agrees_with(Label.BONA_FIDE)


def test_corpus_lookup(samples10):
    corpus = Corpus(samples10)
    assert len(corpus) == 10
    assert "s003" in corpus
    assert corpus.label_of("s003") is Label.SPOOF
    with pytest.raises(UnknownSample):
        corpus["missing"]
    with pytest.raises(DuplicateId):
        Corpus(samples10 + [samples10[0]])


def test_sample_record_round_trip_preserves_extras():
    record = sample_to_record(make_sample(1))
    record["snr_db"] = 18.5
    sample = sample_from_record(record)
    assert sample.extra == {"snr_db": 18.5}
    assert sample_to_record(sample)["snr_db"] == 18.5


def test_sample_record_errors():
    record = sample_to_record(make_sample(0))
    del record["audio_path"]
    with pytest.raises(MissingField):
        sample_from_record(record, line_no=3)
    record = sample_to_record(make_sample(0))
    record["label"] = "genuine"
    with pytest.raises(MalformedRecord):
        sample_from_record(record)


def test_annotation_record_round_trip():
    ann = make_annotation("a2", "s004", Decision.ARTIFICIAL, (14, 2), other_text="hum")
    record = annotation_to_record(ann)
    assert record["reasons"] == [2, 14]
    assert record["other_text"] == "hum"
    assert annotation_from_record(record) == ann


def test_annotation_record_errors():
    good = annotation_to_record(make_annotation("a2", "s004", Decision.ARTIFICIAL, (2,)))
    bad = dict(good, reasons=[2, 99])
    with pytest.raises(MalformedRecord):
        annotation_from_record(bad)
    bad = dict(good, other_text="text without tag 14")
    with pytest.raises(MalformedRecord):
        annotation_from_record(bad)
    bad = dict(good, ts="yesterday")
    with pytest.raises(MalformedRecord):
        annotation_from_record(bad)


def test_ingest_files(tmp_path, samples10):
    sp = write_jsonl_file(tmp_path / "samples.jsonl", [sample_to_record(s) for s in samples10])
    loaded = ingest_samples(sp)
    assert loaded == samples10

    anns = [
        make_annotation("a1", "s000", Decision.GENUINE),
        make_annotation("a1", "s001", Decision.ARTIFICIAL, (10,)),
    ]
    ap = write_jsonl_file(tmp_path / "anns.jsonl", [annotation_to_record(a) for a in anns])
    assert ingest_annotations(ap, loaded) == anns

    stray = annotation_to_record(make_annotation("a1", "zzz", Decision.GENUINE))
    write_jsonl_file(tmp_path / "stray.jsonl", [stray])
    with pytest.raises(UnknownSample):
        ingest_annotations(tmp_path / "stray.jsonl", loaded)


def test_ingest_rejects_duplicates_and_bad_lines(tmp_path, samples10):
    records = [sample_to_record(s) for s in samples10[:2]]
    write_jsonl_file(tmp_path / "dup.jsonl", records + [records[0]])
    with pytest.raises(DuplicateId):
        ingest_samples(tmp_path / "dup.jsonl")

    (tmp_path / "garbage.jsonl").write_text('{"id": "x"\n', encoding="utf-8")
    with pytest.raises(MalformedRecord) as err:
        ingest_samples(tmp_path / "garbage.jsonl")
    assert err.value.line_no == 1


def test_write_jsonl_skips_nothing(tmp_path, samples10):
    path = tmp_path / "out.jsonl"
    n = write_jsonl((sample_to_record(s) for s in samples10), path)
    assert n == 10
    assert len(path.read_text().splitlines()) == 10


def test_split_counts_exact_at_123_samples():
    # 123 samples in one stratum under weights 114:8:1 hit the integers exactly.
    samples = [make_sample(i, label=Label.SPOOF, source="one") for i in range(123)]
    spec = SplitSpec(ratios=(114, 8, 1), seed=11, stratify_by=("source",))
    assignment = make_splits(samples, spec)
    counts = Counter(assignment.values())
    assert counts[Split.TRAIN] == 114 and counts[Split.VAL] == 8 and counts[Split.TEST] == 1


def test_split_is_deterministic_and_stratified(samples10):
    spec = SplitSpec(ratios=(8, 1, 1), seed=5)
    first = make_splits(samples10, spec)
    second = make_splits(list(reversed(samples10)), spec)
    assert first == second  # input order does not matter
    assert make_splits(samples10, SplitSpec(ratios=(8, 1, 1), seed=6)) != first


def test_split_within_one_of_exact_per_stratum():
    rng = random.Random(202)
    samples = [
        make_sample(
            i,
            label=rng.choice([Label.BONA_FIDE, Label.SPOOF]),
            source=rng.choice(["tts-a", "tts-b", "vc-c"]),
        )
        for i in range(500)
    ]
    spec = SplitSpec(ratios=(0.8, 0.1, 0.1), seed=77)
    assignment = make_splits(samples, spec)
    strata: dict[tuple, list] = {}
    for sample in samples:
        strata.setdefault((sample.label, sample.source), []).append(sample.id)
    for members in strata.values():
        got = Counter(assignment[i] for i in members)
        for split, weight in zip(Split, (0.8, 0.1, 0.1)):
            exact = len(members) * weight
            assert abs(got[split] - exact) < 1.0
