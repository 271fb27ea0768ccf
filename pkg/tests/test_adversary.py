import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from detbcast import adversary as A
from detbcast.harness import classify
from detbcast.keysource import TritString, deal_honest
from detbcast.protocol import (
    ABORTED,
    FINAL,
    PROPOSE,
    REPORT,
    PlayerId,
    ProtocolConfig,
    Report,
    accept,
    decided,
    proof_size_threshold,
    receiver_check_r1,
    run_protocol,
)

S, R0, R1 = PlayerId.S, PlayerId.R0, PlayerId.R1
seeds = st.integers(0, 2**32 - 1)


def test_equivocate_example():
    p0, p1 = A.equivocate(TritString([0, 1, 2, 0, 1]), 0, 1)
    assert p0.indices == (0, 3) and p1.indices == (1, 4)
    with pytest.raises(ValueError):
        A.equivocate(TritString([0]), 1, 1)


@given(st.integers(1, 100), seeds)
def test_equivocation_proofs_disjoint(n, seed):
    keys = deal_honest(n, np.random.default_rng(seed))
    p0, p1 = A.equivocate(keys.key_s, 0, 1)
    assert not set(p0.indices) & set(p1.indices)


@given(st.integers(4, 100), seeds, st.integers(0, 1), st.data())
def test_forgery_avoids_impossible_positions(n, seed, b, data):
    rng = np.random.default_rng(seed)
    keys = deal_honest(n, rng)
    eligible = int((keys.key_0.values != b).sum())
    size = data.draw(st.integers(0, eligible))
    proof = A.forge_proof_r0(keys.key_0, b, size, rng)
    assert len(proof) == size
    assert all(keys.key_0[j] != b for j in proof.indices)


def test_forgery_size_zero_rejected_by_threshold():
    keys = deal_honest(20, np.random.default_rng(0))
    proof = A.forge_proof_r0(keys.key_0, 1, 0)
    assert proof.indices == ()
    assert receiver_check_r1(keys.key_s, proof, 0.25, 20).is_bottom


def test_forgery_too_large():
    with pytest.raises(ValueError):
        A.forge_proof_r0(TritString([1, 1]), 1, 1)


def test_forgery_size3_rate():
    # threshold set to the forgery size so only membership decides
    rng = np.random.default_rng(20261015)
    n, size, trials = 30, 3, 20_000
    theta = size / n
    assert proof_size_threshold(theta, n) == size
    hits = 0
    for _ in range(trials):
        keys = deal_honest(n, rng)
        proof = A.forge_proof_r0(keys.key_0, 1, size, rng)
        hits += not receiver_check_r1(keys.key_s, proof, theta, n).is_bottom
    p = 1 / 8
    assert abs(hits / trials - p) <= 4 * math.sqrt(p * (1 - p) / trials)


# --- views and channels -------------------------------------------------------


def spy(seen):
    def fn(rnd, honest, view):
        seen.append((view.target, view.records))
        return honest
    return fn


@pytest.mark.parametrize("target", [S, R0, R1])
def test_view_only_holds_own_channels(target):
    seen = []
    run_protocol(ProtocolConfig(n=60), adversary=A.Custom(target=target, fn=spy(seen)), x_s=1, rng=2)
    assert seen
    for who, records in seen:
        assert all(who in (snd, rcv) for _, snd, rcv, _ in records)


def test_view_key_privacy():
    keys = deal_honest(5, np.random.default_rng(0))
    cfg = ProtocolConfig(n=5)
    with pytest.raises(A.ChannelPrivacyError):
        A.AdversaryView(R0, keys, None, cfg, None).key_s
    with pytest.raises(A.ChannelPrivacyError):
        A.AdversaryView(S, keys, 0, cfg, None).key_0
    view = A.AdversaryView(R0, keys, None, cfg, None)
    assert view.key_0 == keys.key_0
    with pytest.raises(A.ChannelPrivacyError):
        view.channel(S, R1)
    assert view.channel(S, R0) == []
    r1 = A.AdversaryView(R1, keys, None, cfg, None)
    assert r1.key_s == keys.key_s and r1.key_0 == keys.key_0


def test_apply_strategy_silent_and_edges():
    keys = deal_honest(5, np.random.default_rng(0))
    view = A.AdversaryView(S, keys, 0, ProtocolConfig(n=5), None)
    out = A.apply_strategy(A.SenderSilent(), PROPOSE, {R0: "x", R1: "y"}, view)
    assert out == {R0: None, R1: None}
    with pytest.raises(A.ChannelPrivacyError):
        A.apply_strategy(A.Custom(target=S, fn=lambda r, h, v: {S: "self"}), PROPOSE, {}, view)
    with pytest.raises(ValueError):
        A.apply_strategy(A.ReceiverSilent(target=R0), PROPOSE, {}, view)


def test_apply_strategy_fills_missing_receivers():
    keys = deal_honest(5, np.random.default_rng(0))
    view = A.AdversaryView(R0, keys, None, ProtocolConfig(n=5), None)
    out = A.apply_strategy(A.Custom(target=R0, fn=lambda r, h, v: {}), REPORT, {R1: Report(accept(0))}, view)
    assert out == {R1: None}


# --- strategies in full runs ---------------------------------------------------


def test_false_bottom_at_r1_aborts_honest_players():
    for seed in range(10):
        outcomes, _ = run_protocol(ProtocolConfig(n=300), adversary=A.ReceiverFalseBottom(target=R1), x_s=1, rng=seed)
        assert outcomes[S] == ABORTED and outcomes[R0] == ABORTED


def test_custom_identity_equals_honest_run():
    cfg = ProtocolConfig(n=120)
    for seed in range(5):
        honest, th = run_protocol(cfg, x_s=seed % 2, rng=seed)
        custom, tc = run_protocol(cfg, adversary=A.Custom(target=R0), x_s=seed % 2, rng=seed)
        assert honest == custom
        assert th.records == tc.records


@pytest.mark.parametrize("target", [S, R0, R1])
def test_final_split_breaks_agreement(target):
    # known limitation of the final-status round: a split announcement
    # leaves one honest player decided and the other aborted
    for seed in range(10):
        outcomes, _ = run_protocol(ProtocolConfig(n=1200), adversary=A.FinalStatusSplit(target=target), x_s=1, rng=seed)
        assert classify(outcomes, target, 1) == "disagreement"


def test_receiver_forge_r1_does_not_flip_r0():
    for seed in range(20):
        outcomes, _ = run_protocol(ProtocolConfig(n=600), adversary=A.ReceiverForgeReport(target=R1), x_s=0, rng=seed)
        assert outcomes[R0] in (decided(0), ABORTED)
        assert outcomes[S] == outcomes[R0]


def test_dealer_violate_deal():
    strat = A.DealerViolateCond3(violation_set=frozenset({1, 2}))
    keys = strat.deal(10, np.random.default_rng(0))
    assert keys.violation_positions() == {1, 2}
    keys = A.DealerViolateCond3(count=4).deal(10, np.random.default_rng(0))
    assert len(keys.violation_positions()) == 4


def test_make_strategy():
    assert A.make_strategy("none") is None
    s = A.make_strategy("receiver-forge", target="R1", claimed_bit=1, size=4)
    assert s.target is R1 and s.claimed_bit == 1 and s.size == 4
    assert A.make_strategy("final-split", target="S", abort_to="R1").abort_to is R1
    assert A.make_strategy("dealer-violate", violation_set=[1, 2]).violation_set == {1, 2}
    with pytest.raises(ValueError):
        A.make_strategy("telepathy")


def test_catalogue_covers_listed_families():
    cat = A.catalogue(ProtocolConfig())
    names = {s.name for s in cat}
    assert names == set(A.STRATEGIES) - {"final-split"}
    for s in cat:
        assert s.describe()["target"] in ("S", "R0", "R1")
    assert FINAL == 6
