import dataclasses
import json
import math

import pytest

from detbcast import adversary as A
from detbcast.harness import check_transcript, classify, replay, run_campaign
from detbcast.keysource import detection_probability
from detbcast.protocol import (
    ABORTED,
    PROPOSE,
    ConfigError,
    PlayerId,
    ProofSet,
    Propose,
    ProtocolConfig,
    decided,
    run_protocol,
)
from detbcast.transcript import Record, TopologyError, Transcript, TranscriptError

S, R0, R1 = PlayerId.S, PlayerId.R0, PlayerId.R1
D0, D1 = decided(0), decided(1)


@pytest.mark.parametrize(
    "outcomes,corrupt,x,want",
    [
        ({S: D1, R0: D1, R1: D1}, None, 1, "all_decided_1"),
        ({S: ABORTED, R0: ABORTED, R1: ABORTED}, None, 1, "all_honest_aborted"),
        ({S: D1, R0: D1, R1: ABORTED}, None, 1, "disagreement"),
        ({S: D1, R0: D0, R1: D0}, R0, 1, "validity_violation"),
        ({S: D0, R0: D0, R1: D1}, S, 1, "disagreement"),
        ({S: D0, R0: D1, R1: D1}, S, 0, "all_decided_1"),
        ({S: D1, R0: D0, R1: ABORTED}, R0, 1, "disagreement"),
        ({S: ABORTED, R0: D0, R1: ABORTED}, R0, 1, "all_honest_aborted"),
    ],
)
def test_classify(outcomes, corrupt, x, want):
    assert classify(outcomes, corrupt, x) == want


def test_campaign_is_deterministic():
    cfg = ProtocolConfig(n=90)
    strategies = [None, A.SenderEquivocate(), A.ReceiverForgeReport()]
    a = run_campaign(cfg, strategies, 40, seed=9)
    b = run_campaign(cfg, strategies, 40, seed=9)
    c = run_campaign(cfg, strategies, 40, seed=10)
    assert a.to_json_lines() == b.to_json_lines()
    assert a.to_csv() == b.to_csv()
    assert a.to_json_lines() != c.to_json_lines()


def test_campaign_header_and_rows():
    stats = run_campaign(ProtocolConfig(n=90), [None, A.SenderSilent()], 10, seed=1, x_s=0)
    lines = [json.loads(x) for x in stats.to_json_lines().splitlines()]
    assert lines[0] == {"type": "header", "config": {"n": 90, "t": 9, "theta": 0.25, "dealer": "honest", "x_s": 0},
                        "seed": 1, "trials": 10}
    assert [x["type"] for x in lines] == ["header", "strategy", "strategy", "total"]
    assert lines[2]["counts"] == {"all_honest_aborted": 10}
    assert stats.ok


def test_campaign_rejects_bad_input():
    with pytest.raises(ConfigError):
        run_campaign(ProtocolConfig(n=30), [None], 0, seed=1)
    with pytest.raises(ConfigError):
        run_campaign(ProtocolConfig(n=30), [None, None], 1, seed=1)
    with pytest.raises(ConfigError):
        run_campaign(ProtocolConfig(n=30), [None], 1, seed=1, x_s=3)


def test_campaign_flags_violations():
    stats = run_campaign(ProtocolConfig(n=300), [A.FinalStatusSplit(target=R0)], 5, seed=1)
    assert not stats.ok and stats.disagreements == 5


def test_dealer_violation_sample_test_rate():
    n, t, trials = 100, 20, 4000
    cfg = ProtocolConfig(n=n, t=t)
    stats = run_campaign(cfg, [A.DealerViolateCond3(count=n // 2)], trials, seed=20261015)
    rate = next(iter(stats.per_strategy.values()))["sample_test_aborts"] / trials
    p = float(detection_probability(n, n // 2, t))
    assert abs(rate - p) <= 3 * math.sqrt(p * (1 - p) / trials)


def test_forge_membership_rate():
    stats = run_campaign(ProtocolConfig(n=300), [A.ReceiverForgeReport(size=3)], 8000, seed=20261015)
    row = next(iter(stats.per_strategy.values()))
    assert row["forged_proofs"] == 8000
    p = 1 / 8
    assert abs(row["forgery_membership_rate"] - p) <= 4 * math.sqrt(p * (1 - p) / 8000)
    assert row["forgery_accept_rate"] == 0.0  # far below the size threshold


def catalogue_transcripts():
    cfg = ProtocolConfig(n=90)
    _, kept = run_campaign(cfg, [None, *A.catalogue(cfg)], 5, seed=3, keep_transcripts=True)
    return kept


def test_replay_reproduces_every_catalogue_run():
    for t in catalogue_transcripts():
        assert not check_transcript(t)
        text = t.to_json()
        back = Transcript.from_json(text)
        assert back.to_json() == text
        res = replay(back)
        assert res.ok, res.mismatches
        assert res.outcomes == t.outcomes


def test_replay_detects_tampering():
    _, t = run_protocol(ProtocolConfig(n=90), x_s=1, rng=4)
    d = json.loads(t.to_json())
    for rec in d["records"]:
        if rec["kind"] == "propose" and rec["receiver"] == "R1":
            rec["payload"]["proof"]["indices"] = rec["payload"]["proof"]["indices"][:-1]
    res = replay(Transcript.from_dict(d))
    assert not res.ok and any("round 3" in m for m in res.mismatches)


def test_replay_detects_outcome_edit():
    _, t = run_protocol(ProtocolConfig(n=90), x_s=1, rng=4)
    d = json.loads(t.to_json())
    d["outcomes"]["R1"] = "aborted"
    assert not replay(Transcript.from_dict(d)).ok


def test_nonexistent_edge_rejected():
    _, t = run_protocol(ProtocolConfig(n=90), x_s=1, rng=4)
    base = json.loads(t.to_json())
    at = next(i for i, r in enumerate(base["records"]) if r["round"] == 4)
    for sender, receiver in (("R0", "R0"), ("R0", "S")):  # no such link; real link in the wrong round
        d = json.loads(t.to_json())
        d["records"].insert(at, {"round": 3, "sender": sender, "receiver": receiver, "kind": "propose",
                                 "payload": {"value": 1, "proof": {"value": 1, "indices": []}}})
        with pytest.raises(TopologyError):
            Transcript.from_dict(d)


def test_round_order_and_schema_enforced():
    _, t = run_protocol(ProtocolConfig(n=90), x_s=1, rng=4)
    d = json.loads(t.to_json())
    d["records"].reverse()
    with pytest.raises(TranscriptError):
        Transcript.from_dict(d)
    with pytest.raises(TranscriptError):
        Transcript.from_json("[]")
    with pytest.raises(TranscriptError):
        Transcript.from_json("{nope")
    d = json.loads(t.to_json())
    d["schema"] = "other/9"
    with pytest.raises(TranscriptError):
        Transcript.from_dict(d)


def test_check_transcript_flags_consumed_positions():
    _, t = run_protocol(ProtocolConfig(n=90), x_s=1, rng=4)
    sampled = next(r.message.indices for r in t.records if r.kind == "sample_reveal")
    bad = Propose(1, ProofSet(1, (sampled[0],)))
    records = [dataclasses.replace(r, message=bad) if r.round == PROPOSE else r for r in t.records]
    t2 = dataclasses.replace(t, records=records)
    assert any("consumed" in p for p in check_transcript(t2))


def test_record_json_rejects_unknown_kind():
    with pytest.raises(TranscriptError):
        Record.from_json({"round": 1, "sender": "S", "receiver": "R0", "kind": "poem", "payload": {}})
