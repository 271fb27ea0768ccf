"""Monte Carlo campaigns, transcript checks and replay."""
from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .keysource import choose_sample
from .protocol import (
    FINAL,
    FORWARD,
    PLAYERS,
    ROUND_EDGES,
    ROUND_MESSAGE,
    SAMPLE_REVEAL,
    SAMPLE_VERDICT,
    PlayerId,
    ProtocolConfig,
    ConfigError,
    initial_states,
    receive,
    receiver_check_r1,
    run_protocol,
    send,
)
from .transcript import TOPOLOGY, ChannelTopology, Transcript, TranscriptError

__all__ = [
    "ChannelTopology",
    "TOPOLOGY",
    "Transcript",
    "CampaignStats",
    "classify",
    "check_transcript",
    "run_campaign",
    "replay",
    "ReplayResult",
]

S, R0, R1 = PlayerId.S, PlayerId.R0, PlayerId.R1
FORBIDDEN = ("disagreement", "validity_violation")


def classify(outcomes: dict, corrupt, x_s: int) -> str:
    """Name the honest-outcome pattern of one run."""
    honest = [outcomes[p] for p in PLAYERS if p != corrupt]
    if corrupt is not S and any(not o.aborted and o.value != x_s for o in honest):
        return "validity_violation"
    if all(o.aborted for o in honest):
        return "all_honest_aborted"
    values = {o.value for o in honest}
    if len(values) == 1:
        return f"all_decided_{values.pop()}"
    return "disagreement"


def check_transcript(t: Transcript) -> list:
    """Structural invariants; returns a list of problems (empty when clean).

    Honest senders must use the expected message kind for the round, and no
    proof an honest player emits may touch a revealed sample position.
    """
    problems = []
    try:
        t.validate()
    except TranscriptError as exc:
        problems.append(str(exc))
    consumed = set()
    for rec in t.records:
        if rec.round == SAMPLE_REVEAL:
            consumed.update(rec.message.indices)
    for rec in t.records:
        if rec.sender == t.corrupt:
            continue
        if not isinstance(rec.message, ROUND_MESSAGE.get(rec.round, ())):
            problems.append(f"{rec.sender} sent {rec.kind} in round {rec.round}")
        proof = getattr(rec.message, "proof", None)
        if proof is not None and consumed.intersection(proof.indices):
            problems.append(f"{rec.sender} used consumed sample positions in round {rec.round}")
    return problems


def _forgery_stats(t: Transcript) -> tuple:
    """(forged, exact-membership passes, full R1-check passes) for an R0 forger."""
    for rec in t.records:
        if rec.round == FORWARD and rec.sender is R0 and rec.receiver is R1:
            proof = rec.message.proof
            ks = t.keys.key_s.values
            member = bool((ks[list(proof.indices)] == proof.claimed_value).all()) if len(proof) else True
            cfg = t.config
            full = not receiver_check_r1(t.keys.key_s, proof, cfg.theta, cfg.residual_length).is_bottom
            return 1, int(member), int(full)
    return 0, 0, 0


def _sample_test_failed(t: Transcript) -> bool:
    if t.corrupt is S:
        return False
    return any(r.round == SAMPLE_VERDICT and not r.message.passed for r in t.records)


def strategy_label(strategy) -> str:
    if strategy is None:
        return "none"
    d = strategy.describe()
    extras = ",".join(f"{k}={v}" for k, v in d.items() if k not in ("name", "target") and v is not None)
    return f"{d['name']}@{d['target']}" + (f"({extras})" if extras else "")


@dataclass
class CampaignStats:
    config: dict
    seed: int
    trials: int
    counts: Counter = field(default_factory=Counter)
    per_strategy: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    transcript_problems: int = 0

    @property
    def disagreements(self) -> int:
        return self.counts["disagreement"]

    @property
    def validity_violations(self) -> int:
        return self.counts["validity_violation"]

    @property
    def ok(self) -> bool:
        return not any(self.counts[k] for k in FORBIDDEN) and not self.transcript_problems

    def to_json_lines(self) -> str:
        header = {"type": "header", "config": self.config, "seed": self.seed, "trials": self.trials}
        lines = [json.dumps(header, sort_keys=True)]
        for label, row in self.per_strategy.items():
            lines.append(json.dumps({"type": "strategy", "strategy": label, "seed": self.seeds[label], **row}, sort_keys=True))
        total = {"type": "total", "counts": dict(sorted(self.counts.items())), "ok": self.ok,
                 "transcript_problems": self.transcript_problems}
        lines.append(json.dumps(total, sort_keys=True))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        keys = ["all_decided_0", "all_decided_1", "all_honest_aborted", "disagreement", "validity_violation"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["strategy", *keys, "sample_test_aborts", "forgery_rate"])
        for label, row in self.per_strategy.items():
            c = row["counts"]
            w.writerow([label, *(c.get(k, 0) for k in keys), row["sample_test_aborts"], row.get("forgery_membership_rate", "")])
        return buf.getvalue()


def run_campaign(
    config: ProtocolConfig,
    strategies,
    trials: int,
    seed: int,
    dealer="honest",
    x_s: int | None = None,
    keep_transcripts: bool = False,
):
    """Run ``trials`` independent executions per strategy (``None`` = no adversary).

    Returns ``CampaignStats`` (and the transcripts when ``keep_transcripts``).
    """
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    if x_s not in (None, 0, 1):
        raise ConfigError(f"x_s must be 0, 1 or None, got {x_s!r}")
    strategies = list(strategies) or [None]
    stats = CampaignStats(
        config={"n": config.n, "t": config.t, "theta": config.theta, "dealer": _dealer_label(dealer), "x_s": x_s},
        seed=seed,
        trials=trials,
    )
    kept = []
    master = np.random.SeedSequence(seed)
    for strategy, child in zip(strategies, master.spawn(len(strategies))):
        label = strategy_label(strategy)
        if label in stats.per_strategy:
            raise ConfigError(f"duplicate strategy {label}")
        rng = np.random.default_rng(child)
        run_seeds = rng.integers(0, 2**63, size=trials)
        bits = rng.integers(0, 2, size=trials) if x_s is None else np.full(trials, x_s)
        counts, sample_aborts, forged = Counter(), 0, np.zeros(3, dtype=np.int64)
        for run_seed, bit in zip(run_seeds.tolist(), bits.tolist()):
            outcomes, t = run_protocol(config, dealer, strategy, bit, run_seed)
            pattern = classify(outcomes, t.corrupt, bit)
            counts[pattern] += 1
            if check_transcript(t):
                stats.transcript_problems += 1
            if pattern == "all_honest_aborted" and _sample_test_failed(t):
                sample_aborts += 1
            if strategy is not None and strategy.name == "receiver-forge" and strategy.target is R0:
                forged += _forgery_stats(t)
            if keep_transcripts:
                kept.append(t)
        row = {"counts": dict(sorted(counts.items())), "sample_test_aborts": sample_aborts}
        if forged[0]:
            row["forged_proofs"] = int(forged[0])
            row["forgery_membership_rate"] = forged[1] / forged[0]
            row["forgery_accept_rate"] = forged[2] / forged[0]
        stats.per_strategy[label] = row
        stats.seeds[label] = int(child.generate_state(1)[0])
        stats.counts.update(counts)
    return (stats, kept) if keep_transcripts else stats


def _dealer_label(dealer):
    if isinstance(dealer, tuple):
        return {"kind": dealer[0], "violations": sorted(dealer[1])}
    return dealer if isinstance(dealer, str) else getattr(dealer, "__name__", "custom")


@dataclass
class ReplayResult:
    outcomes: dict
    mismatches: list

    @property
    def ok(self) -> bool:
        return not self.mismatches


def replay(transcript: Transcript) -> ReplayResult:
    """Re-run the honest state machines against the recorded adversary messages."""
    t = transcript
    t.validate()
    config = t.config
    if "sample" not in t.seeds:
        raise TranscriptError("transcript lacks the sample seed")
    sample = choose_sample(config.n, config.t, np.random.default_rng(t.seeds["sample"]))
    states = initial_states(config, t.keys, t.x_s, sample)
    by_round = {}
    for rec in t.records:
        edge = (rec.sender, rec.receiver)
        slot = by_round.setdefault(rec.round, {})
        if edge in slot:
            raise TranscriptError(f"two messages on {rec.sender}->{rec.receiver} in round {rec.round}")
        slot[edge] = rec.message
    mismatches = []
    for rnd in range(SAMPLE_REVEAL, FINAL + 1):
        recorded = by_round.get(rnd, {})
        inboxes = {p: {} for p in PLAYERS}
        for p in PLAYERS:
            honest = send(states[p], rnd)
            for a, b in ROUND_EDGES[rnd]:
                if a is not p:
                    continue
                got = recorded.get((a, b))
                if p == t.corrupt:
                    inboxes[b][a] = got
                    continue
                if got != honest.get(b):
                    mismatches.append(f"round {rnd} {a}->{b}: recorded {got!r}, honest run gives {honest.get(b)!r}")
                inboxes[b][a] = honest.get(b)
        states = {p: receive(states[p], rnd, inboxes[p]) for p in PLAYERS}
    outcomes = {p: states[p].outcome for p in PLAYERS}
    for p in PLAYERS:
        if t.outcomes.get(p) != outcomes[p]:
            mismatches.append(f"outcome of {p}: recorded {t.outcomes.get(p)}, replay gives {outcomes[p]}")
    return ReplayResult(outcomes, mismatches)
