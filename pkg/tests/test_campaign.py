from __future__ import annotations

import json

import pytest
from fastapi.testclient import TestClient

from sddkit.campaign import (
    CampaignService,
    DuplicateSample,
    EmptyManifest,
    ExcludedAnnotator,
    Status,
    UnknownAnnotator,
    UnknownCampaign,
    ValidationFailed,
    WrongTask,
    build_app,
)
from sddkit.corpus import Label, as_corpus, ingest_annotations, sample_to_record
from conftest import make_sample, write_jsonl_file

COMMENT = "robotic tone with uniform pacing and strange stress patterns"


def manifest(n: int):
    return [make_sample(i) for i in range(n)]


def truth_genuine(sample_id: str) -> bool:
    return int(sample_id[1:]) % 2 == 0


def answer(sample_id: str, wrong: bool = False) -> dict:
    genuine = truth_genuine(sample_id)
    if wrong:
        genuine = not genuine
    return {
        "sample_id": sample_id,
        "decision": "genuine" if genuine else "artificial",
        "reasons": [] if genuine else [9],
        "comment": COMMENT,
    }


def run_script(service, campaign_id, annotator_id, wrong_flags):
    acks = []
    for wrong in wrong_flags:
        task = service.next_sample(campaign_id, annotator_id)
        acks.append(
            service.submit_response(campaign_id, annotator_id, answer(task["sample_id"], wrong))
        )
    return acks


def test_create_campaign_validation():
    service = CampaignService()
    with pytest.raises(EmptyManifest):
        service.create_campaign([])
    samples = manifest(3)
    with pytest.raises(DuplicateSample):
        service.create_campaign(samples + [samples[0]])
    with pytest.raises(ValidationFailed):
        service.create_campaign(samples, feedback_window=0)
    campaign = service.create_campaign(manifest(50))
    assert len(campaign.sample_ids) == 50 and campaign.feedback_window == 30


def test_served_order_is_seeded_permutation():
    service = CampaignService()
    c1 = service.create_campaign(manifest(20), shuffle_seed=1)
    c2 = service.create_campaign(manifest(20), shuffle_seed=2)
    a1 = service.register_annotator(c1.id)
    a2 = service.register_annotator(c2.id)
    o1 = service._sessions[(c1.id, a1)].served_order
    o2 = service._sessions[(c2.id, a2)].served_order
    assert sorted(o1) == sorted(o2) == sorted(s.id for s in manifest(20))
    assert o1 != o2  # different shuffle_seed, different order


def test_next_is_idempotent_until_submission():
    service = CampaignService()
    campaign = service.create_campaign(manifest(5))
    annotator = service.register_annotator(campaign.id)
    first = service.next_sample(campaign.id, annotator)
    again = service.next_sample(campaign.id, annotator)
    assert first == again
    assert first["position"] == 1 and first["total"] == 5
    assert "label" not in json.dumps(first)
    service.submit_response(campaign.id, annotator, answer(first["sample_id"]))
    assert service.next_sample(campaign.id, annotator)["sample_id"] != first["sample_id"]


def test_completion_and_done():
    service = CampaignService()
    campaign = service.create_campaign(manifest(4))
    annotator = service.register_annotator(campaign.id)
    run_script(service, campaign.id, annotator, [False] * 4)
    done = service.next_sample(campaign.id, annotator)
    assert done == {"done": True, "n_submitted": 4}


def test_submission_validation_rules():
    service = CampaignService()
    campaign = service.create_campaign(manifest(5))
    annotator = service.register_annotator(campaign.id)
    sample_id = service.next_sample(campaign.id, annotator)["sample_id"]

    def expect(rule_field, rule, **overrides):
        payload = dict(answer(sample_id), **overrides)
        with pytest.raises(ValidationFailed) as err:
            service.submit_response(campaign.id, annotator, payload)
        assert (err.value.field, err.value.rule) == (rule_field, rule)

    expect("decision", "must be 'genuine' or 'artificial'", decision="maybe")
    expect("comment", "min_words", comment="sounds fine")
    genuine = truth_genuine(sample_id)
    if genuine:
        expect("reasons", "forbidden_for_genuine", decision="genuine", reasons=[2])
        expect("reasons", "required_for_artificial", decision="artificial", reasons=[])
    else:
        expect("reasons", "required_for_artificial", decision="artificial", reasons=[])
        expect("reasons", "forbidden_for_genuine", decision="genuine", reasons=[2])
    expect("reasons", "unknown_tag", decision="artificial", reasons=[99])
    expect("other_text", "required_for_other", decision="artificial", reasons=[14])
    expect(
        "other_text", "requires_tag_14", decision="artificial", reasons=[2], other_text="hum"
    )
    with pytest.raises(WrongTask):
        service.submit_response(campaign.id, annotator, answer("s999"))
    # nothing was stored along the way
    assert service.annotator_stats(campaign.id, annotator)["n_submitted"] == 0


def test_idempotency_key_returns_stored_ack():
    service = CampaignService()
    campaign = service.create_campaign(manifest(5))
    annotator = service.register_annotator(campaign.id)
    sample_id = service.next_sample(campaign.id, annotator)["sample_id"]
    payload = dict(answer(sample_id), idempotency_key="once")
    first = service.submit_response(campaign.id, annotator, payload)
    second = service.submit_response(campaign.id, annotator, payload)
    assert first == second
    assert service.annotator_stats(campaign.id, annotator)["n_submitted"] == 1


def test_feedback_ack_carries_accuracy_and_status():
    service = CampaignService()
    campaign = service.create_campaign(manifest(10), feedback_window=4)
    annotator = service.register_annotator(campaign.id)
    acks = run_script(service, campaign.id, annotator, [False, True, False, False])
    assert acks[0]["rolling_accuracy"] == 1.0
    assert acks[1]["rolling_accuracy"] == 0.5
    assert acks[3]["rolling_accuracy"] == 0.75
    assert all(a["status"] == Status.ACTIVE for a in acks)


def test_two_strike_escalation_and_gate():
    service = CampaignService()
    campaign = service.create_campaign(manifest(70))
    annotator = service.register_annotator(campaign.id)
    acks = run_script(service, campaign.id, annotator, [i < 16 for i in range(30)])
    assert acks[28]["status"] == Status.ACTIVE
    assert acks[29]["status"] == Status.RETRAINING  # 14/30 = 0.467 < 0.75
    assert acks[29]["rolling_accuracy"] is None  # window restarted
    acks = run_script(service, campaign.id, annotator, [True] * 30)
    assert acks[-1]["status"] == Status.EXCLUDED
    with pytest.raises(ExcludedAnnotator):
        service.next_sample(campaign.id, annotator)
    with pytest.raises(ExcludedAnnotator):
        service.submit_response(campaign.id, annotator, answer("s000"))


def test_retraining_recovers_to_active():
    service = CampaignService()
    campaign = service.create_campaign(manifest(30), feedback_window=10)
    annotator = service.register_annotator(campaign.id)
    acks = run_script(service, campaign.id, annotator, [i < 5 for i in range(10)])
    assert acks[-1]["status"] == Status.RETRAINING
    acks = run_script(service, campaign.id, annotator, [False] * 10)
    assert acks[-1]["status"] == Status.ACTIVE


def test_stats_fee_and_tier():
    service = CampaignService()
    campaign = service.create_campaign(manifest(40), per_sample_fee=0.05)
    annotator = service.register_annotator(campaign.id)
    fresh = service.annotator_stats(campaign.id, annotator)
    assert fresh["rolling_accuracy"] is None and fresh["lifetime_accuracy"] is None
    assert fresh["fee"] == 0.0 and fresh["tier_eligible"] is None
    run_script(service, campaign.id, annotator, [i < 6 for i in range(30)])
    stats = service.annotator_stats(campaign.id, annotator)
    assert stats["n_submitted"] == 30
    assert stats["lifetime_accuracy"] == pytest.approx(0.8)
    assert stats["fee"] == pytest.approx(1.50)
    assert stats["status"] == Status.ACTIVE
    assert stats["tier_eligible"] == "medium"
    with pytest.raises(UnknownAnnotator):
        service.annotator_stats(campaign.id, "ghost")
    with pytest.raises(UnknownCampaign):
        service.annotator_stats("nope", annotator)


def test_export_round_trips_through_ingestion(tmp_path):
    service = CampaignService()
    samples = manifest(8)
    campaign = service.create_campaign(samples)
    annotator = service.register_annotator(campaign.id)
    run_script(service, campaign.id, annotator, [False] * 8)
    records = service.export_annotations(campaign.id)
    assert len(records) == 8
    pairs = {(r["annotator_id"], r["sample_id"]) for r in records}
    assert len(pairs) == 8  # at most one response per (annotator, sample)
    path = write_jsonl_file(tmp_path / "export.jsonl", records)
    loaded = ingest_annotations(path, as_corpus(samples))
    assert len(loaded) == 8


def test_event_log_replay_reproduces_state(tmp_path):
    log = tmp_path / "events.jsonl"
    service = CampaignService(log_path=log)
    campaign = service.create_campaign(manifest(70), shuffle_seed=3, per_sample_fee=0.02)
    annotator = service.register_annotator(campaign.id)
    run_script(service, campaign.id, annotator, [i < 16 for i in range(30)])

    replayed = CampaignService(log_path=log)
    assert replayed.annotator_stats(campaign.id, annotator) == service.annotator_stats(
        campaign.id, annotator
    )
    assert (
        replayed._sessions[(campaign.id, annotator)].served_order
        == service._sessions[(campaign.id, annotator)].served_order
    )
    events = [json.loads(line) for line in log.read_text().splitlines()]
    kinds = [e["event"] for e in events]
    assert kinds.count("campaign_created") == 1
    assert kinds.count("response_submitted") == 30
    assert "status_changed" in kinds  # the retraining transition was logged


def test_fresh_instance_reproduces_scripted_run():
    def run_once():
        service = CampaignService()
        campaign = service.create_campaign(manifest(20), shuffle_seed=11, campaign_id="fixed")
        annotator = service.register_annotator(campaign.id)
        order = list(service._sessions[(campaign.id, annotator)].served_order)
        acks = run_script(service, campaign.id, annotator, [i % 3 == 0 for i in range(20)])
        return annotator, order, [a["status"] for a in acks]

    assert run_once() == run_once()


# -- HTTP layer ------------------------------------------------------------


@pytest.fixture
def client(tmp_path):
    wavs = []
    for i in range(6):
        path = tmp_path / f"s{i:03d}.wav"
        path.write_bytes(b"RIFF")  # placeholder bytes; content is opaque here
        wavs.append(path)
    samples = [
        dict(sample_to_record(make_sample(i)), audio_path=str(wavs[i])) for i in range(6)
    ]
    app = build_app(CampaignService())
    return TestClient(app), samples


def test_http_flow_and_error_codes(client):
    http, samples = client
    created = http.post("/campaigns", json={"samples": samples, "shuffle_seed": 5})
    assert created.status_code == 201
    cid = created.json()["campaign_id"]
    assert "label" not in json.dumps(created.json())

    annotator = http.post(f"/campaigns/{cid}/annotators").json()["annotator_id"]
    task = http.get(f"/campaigns/{cid}/next", params={"annotator": annotator}).json()
    assert len(task["reasons"]) == 14
    assert "label" not in json.dumps(task)

    short = http.post(
        f"/campaigns/{cid}/responses",
        json={
            "annotator_id": annotator,
            "sample_id": task["sample_id"],
            "decision": "genuine",
            "reasons": [],
            "comment": "too short",
        },
    )
    assert short.status_code == 422 and short.json()["rule"] == "min_words"

    stale = http.post(
        f"/campaigns/{cid}/responses",
        json=dict(answer("s999"), annotator_id=annotator),
    )
    assert stale.status_code == 409

    ok = http.post(
        f"/campaigns/{cid}/responses",
        json=dict(answer(task["sample_id"]), annotator_id=annotator, idempotency_key="k1"),
    )
    assert ok.status_code == 200
    assert "label" not in json.dumps(ok.json())
    dup = http.post(
        f"/campaigns/{cid}/responses",
        json=dict(answer(task["sample_id"]), annotator_id=annotator, idempotency_key="k1"),
    )
    assert dup.json() == ok.json()

    stats = http.get(f"/campaigns/{cid}/annotators/{annotator}/stats")
    assert stats.json()["n_submitted"] == 1
    assert "label" not in json.dumps(stats.json())

    export = http.get(f"/campaigns/{cid}/export")
    lines = [json.loads(line) for line in export.text.splitlines()]
    assert len(lines) == 1
    assert "label" not in json.dumps(lines)

    assert http.get(f"/campaigns/zzz/next", params={"annotator": annotator}).status_code == 404
    assert http.get(f"/campaigns/{cid}/annotators/ghost/stats").status_code == 404


def test_http_audio_serves_wav_bytes(client):
    http, samples = client
    cid = http.post("/campaigns", json={"samples": samples}).json()["campaign_id"]
    got = http.get(f"/campaigns/{cid}/audio/s003")
    assert got.status_code == 200
    assert got.content == b"RIFF"
    assert got.headers["content-type"] == "audio/wav"
    assert http.get(f"/campaigns/{cid}/audio/zzz").status_code == 404


def test_http_create_rejects_empty(client):
    http, _ = client
    assert http.post("/campaigns", json={"samples": []}).status_code == 422
