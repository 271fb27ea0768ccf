"""Detectable broadcast of one bit from S to R0 and R1 using the dealt keys.

Rounds (synchronous, ``None`` stands for a missing message)::

    0  deal            R1 -> S, R1 -> R0      keys over the quantum links
    1  sample reveal   R0 -> S                R0's trits on t random positions
    2  sample verdict  S  -> R0, R1           pass / fail
    3  propose         S  -> R0, R1           value + index-set proof
    4  report          R0 <-> R1              local verdict (bit or bottom)
    5  forward         R0 <-> R1              own proof, only if reports differ
    6  final status    everyone -> everyone   Decided(b) or Abort

A proof for bit b is a set of residual key positions where the prover
claims k_s == b.  R1 checks it exactly; R0 can only check k_0 != b.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .keysource import (
    DealtKeys,
    TritString,
    choose_sample,
    deal_from_quantum,
    deal_honest,
    deal_adversarial,
)

DEAL, SAMPLE_REVEAL, SAMPLE_VERDICT, PROPOSE, REPORT, FORWARD, FINAL = range(7)
ROUND_NAMES = ("deal", "sample_reveal", "sample_verdict", "propose", "report", "forward", "final_status")


class PlayerId(str, enum.Enum):
    S = "S"
    R0 = "R0"
    R1 = "R1"

    def __str__(self):
        return self.value


S, R0, R1 = PlayerId.S, PlayerId.R0, PlayerId.R1
PLAYERS = (S, R0, R1)

# who talks to whom in each round
ROUND_EDGES = {
    DEAL: ((R1, S), (R1, R0)),
    SAMPLE_REVEAL: ((R0, S),),
    SAMPLE_VERDICT: ((S, R0), (S, R1)),
    PROPOSE: ((S, R0), (S, R1)),
    REPORT: ((R0, R1), (R1, R0)),
    FORWARD: ((R0, R1), (R1, R0)),
    FINAL: tuple((a, b) for a in PLAYERS for b in PLAYERS if a != b),
}


class ConfigError(ValueError):
    pass


def _is_bit(b) -> bool:
    return not isinstance(b, bool) and isinstance(b, (int, np.integer)) and b in (0, 1)


@dataclass(frozen=True)
class ProtocolConfig:
    n: int = 300
    t: int | None = None
    theta: float = 0.25

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 1:
            raise ConfigError(f"key length n must be >= 1, got {self.n!r}")
        if self.t is None:
            object.__setattr__(self, "t", math.ceil(self.n / 10))
        if not 0 <= self.t <= self.n:
            raise ConfigError(f"sample size t must be in [0, n], got {self.t!r}")
        if not 0 < self.theta <= 1 / 3:
            raise ConfigError(f"threshold theta must be in (0, 1/3], got {self.theta!r}")

    @property
    def residual_length(self) -> int:
        return self.n - self.t

    @property
    def min_proof_size(self) -> int:
        return proof_size_threshold(self.theta, self.residual_length)


def proof_size_threshold(theta: float, n_residual: int) -> int:
    """Smallest integer size satisfying size >= theta * n_residual."""
    return max(0, math.ceil(theta * n_residual - 1e-9))


# --- values, verdicts, outcomes -------------------------------------------


@dataclass(frozen=True)
class Verdict:
    """Accept(value) or bottom (value is None)."""

    value: int | None = None

    @property
    def is_bottom(self) -> bool:
        return self.value is None

    def __str__(self):
        return "bottom" if self.value is None else f"accept:{self.value}"

    @classmethod
    def parse(cls, text: str) -> Verdict:
        if text == "bottom":
            return BOTTOM
        if text in ("accept:0", "accept:1"):
            return cls(int(text[-1]))
        raise ValueError(f"bad verdict {text!r}")


BOTTOM = Verdict(None)


def accept(b: int) -> Verdict:
    return Verdict(int(b))


@dataclass(frozen=True)
class Outcome:
    """Decided(value) or Aborted (value is None)."""

    value: int | None = None

    @property
    def aborted(self) -> bool:
        return self.value is None

    def __str__(self):
        return "aborted" if self.value is None else f"decided:{self.value}"

    @classmethod
    def parse(cls, text: str) -> Outcome:
        if text == "aborted":
            return ABORTED
        if text in ("decided:0", "decided:1"):
            return cls(int(text[-1]))
        raise ValueError(f"bad outcome {text!r}")


ABORTED = Outcome(None)


def decided(b: int) -> Outcome:
    return Outcome(int(b))


@dataclass(frozen=True)
class ProofSet:
    claimed_value: int
    indices: tuple = ()

    def __post_init__(self):
        if not _is_bit(self.claimed_value):
            raise ValueError(f"claimed value must be a bit, got {self.claimed_value!r}")
        idx = list(map(int, self.indices))
        if any(b <= a for a, b in zip(idx, idx[1:])):
            idx.sort()
            if any(b == a for a, b in zip(idx, idx[1:])):
                raise ValueError("proof indices contain duplicates")
        idx = tuple(idx)
        object.__setattr__(self, "claimed_value", int(self.claimed_value))
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    def to_payload(self) -> dict:
        return {"value": self.claimed_value, "indices": list(self.indices)}

    @classmethod
    def from_payload(cls, d: dict) -> ProofSet:
        return cls(d["value"], tuple(d["indices"]))


# --- messages ---------------------------------------------------------------


@dataclass(frozen=True)
class SampleReveal:
    indices: tuple
    trits: tuple
    kind = "sample_reveal"

    def to_payload(self):
        return {"indices": list(self.indices), "trits": list(self.trits)}

    @classmethod
    def from_payload(cls, d):
        return cls(tuple(int(j) for j in d["indices"]), tuple(int(v) for v in d["trits"]))


@dataclass(frozen=True)
class SampleVerdict:
    passed: bool
    kind = "sample_verdict"

    def to_payload(self):
        return {"passed": bool(self.passed)}

    @classmethod
    def from_payload(cls, d):
        if not isinstance(d["passed"], bool):
            raise ValueError("passed must be a boolean")
        return cls(d["passed"])


@dataclass(frozen=True)
class Propose:
    value: int
    proof: ProofSet
    kind = "propose"

    def to_payload(self):
        return {"value": self.value, "proof": self.proof.to_payload()}

    @classmethod
    def from_payload(cls, d):
        return cls(int(d["value"]), ProofSet.from_payload(d["proof"]))


@dataclass(frozen=True)
class Report:
    verdict: Verdict
    kind = "report"

    def to_payload(self):
        return {"verdict": str(self.verdict)}

    @classmethod
    def from_payload(cls, d):
        return cls(Verdict.parse(d["verdict"]))


@dataclass(frozen=True)
class ForwardProof:
    proof: ProofSet
    kind = "forward_proof"

    def to_payload(self):
        return {"proof": self.proof.to_payload()}

    @classmethod
    def from_payload(cls, d):
        return cls(ProofSet.from_payload(d["proof"]))


@dataclass(frozen=True)
class FinalStatus:
    status: Outcome
    kind = "final_status"

    def to_payload(self):
        return {"status": str(self.status)}

    @classmethod
    def from_payload(cls, d):
        return cls(Outcome.parse(d["status"]))


@dataclass(frozen=True)
class KeyDelivery:
    """Placeholder for the quantum-link delivery; the keys themselves stay off the record."""

    length: int
    kind = "key_delivery"

    def to_payload(self):
        return {"length": self.length}

    @classmethod
    def from_payload(cls, d):
        return cls(int(d["length"]))


MESSAGE_TYPES = {
    m.kind: m for m in (KeyDelivery, SampleReveal, SampleVerdict, Propose, Report, ForwardProof, FinalStatus)
}
ROUND_MESSAGE = {
    DEAL: KeyDelivery,
    SAMPLE_REVEAL: SampleReveal,
    SAMPLE_VERDICT: SampleVerdict,
    PROPOSE: Propose,
    REPORT: Report,
    FORWARD: ForwardProof,
    FINAL: FinalStatus,
}


# --- the proof operations ---------------------------------------------------


def sender_propose(key_s: TritString, x_s: int, consumed=frozenset()) -> ProofSet:
    """Honest proof: every residual position where the sender's key equals x_s."""
    if not _is_bit(x_s):
        raise ValueError(f"x_s must be a bit, got {x_s!r}")
    mask = key_s.values == x_s
    if consumed:
        mask[list(consumed)] = False
    # flatnonzero is sorted and duplicate-free already
    proof = object.__new__(ProofSet)
    object.__setattr__(proof, "claimed_value", int(x_s))
    object.__setattr__(proof, "indices", tuple(np.flatnonzero(mask).tolist()))
    return proof


def _as_proof(msg) -> ProofSet | None:
    if isinstance(msg, ProofSet):
        return msg
    if isinstance(msg, ForwardProof):
        return msg.proof
    if isinstance(msg, Propose):
        if msg.value != msg.proof.claimed_value:
            return None
        return msg.proof
    return None


def _proof_positions(proof: ProofSet, n: int, min_size: int, consumed) -> np.ndarray | None:
    if len(proof) < min_size:
        return None
    idx = np.asarray(proof.indices, dtype=np.int64)
    if idx.size and (idx[0] < 0 or idx[-1] >= n):
        return None
    if consumed and not consumed.isdisjoint(proof.indices):
        return None
    return idx


def receiver_check_r0(key_0: TritString, msg, theta: float, n_residual: int, consumed=frozenset()) -> Verdict:
    """Accept(b) iff the proof is big enough, avoids consumed positions and k_0 != b on all of it."""
    proof = _as_proof(msg)
    if proof is None:
        return BOTTOM
    idx = _proof_positions(proof, key_0.n, proof_size_threshold(theta, n_residual), consumed)
    if idx is None or (key_0.values[idx] == proof.claimed_value).any():
        return BOTTOM
    return accept(proof.claimed_value)


def receiver_check_r1(key_s: TritString, msg, theta: float, n_residual: int) -> Verdict:
    """Accept(b) iff the proof is big enough and k_s == b on all of it (R1 knows k_s)."""
    proof = _as_proof(msg)
    if proof is None:
        return BOTTOM
    idx = _proof_positions(proof, key_s.n, proof_size_threshold(theta, n_residual), None)
    if idx is None or (key_s.values[idx] != proof.claimed_value).any():
        return BOTTOM
    return accept(proof.claimed_value)


def resolve(own_verdict: Verdict, other_report, own_key_check, forwarded=None) -> Outcome:
    """Combine the local verdict with the other receiver's report.

    ``own_key_check`` maps a ProofSet to this receiver's Verdict on it.
    """
    if not isinstance(other_report, Report):
        return ABORTED
    theirs = other_report.verdict
    fwd = _as_proof(forwarded)
    fwd_ok = (
        fwd is not None
        and not theirs.is_bottom
        and fwd.claimed_value == theirs.value
        and own_key_check(fwd) == theirs
    )
    if own_verdict.is_bottom:
        if theirs.is_bottom:
            return ABORTED
        return decided(theirs.value) if fwd_ok else ABORTED
    if theirs.is_bottom or theirs == own_verdict:
        return decided(own_verdict.value)
    # conflicting accepts: a valid counter-proof shows the sender equivocated
    return ABORTED if fwd_ok else decided(own_verdict.value)


def settle(own: Outcome, received) -> Outcome:
    """Final-status rule: keep a decision only if every other announcement agrees with it."""
    if own.aborted:
        return ABORTED
    for msg in received:
        if not isinstance(msg, FinalStatus) or msg.status != own:
            return ABORTED
    return own


def final_status_round(announcements: dict) -> dict:
    """``announcements[(sender, receiver)]`` -> per-player Outcome.

    Each player's own status is what it sent out (honest players send the
    same thing to both).
    """
    out = {}
    for p in PLAYERS:
        mine = [announcements.get((p, q)) for q in PLAYERS if q != p]
        own = mine[0].status if isinstance(mine[0], FinalStatus) else ABORTED
        received = [announcements.get((q, p)) for q in PLAYERS if q != p]
        out[p] = settle(own, received)
    return out


# --- per-player state machines ----------------------------------------------


@dataclass(frozen=True)
class PlayerState:
    role: PlayerId
    config: ProtocolConfig
    key_s: TritString | None = None
    key_0: TritString | None = None
    x_s: int | None = None
    sample: tuple = ()
    alive: bool = True
    verdict: Verdict = BOTTOM
    proof: ProofSet | None = None
    other_report: Report | None = None
    forwarded: ForwardProof | None = None
    status: Outcome = ABORTED
    outcome: Outcome | None = None

    @property
    def consumed(self) -> frozenset:
        return frozenset(self.sample)


def replace(st: PlayerState, **changes) -> PlayerState:
    # dataclasses.replace re-runs __init__; this is the hot path of every run
    new = object.__new__(PlayerState)
    new.__dict__.update(st.__dict__)
    new.__dict__.update(changes)
    return new


def initial_states(config: ProtocolConfig, keys: DealtKeys, x_s: int, r0_sample) -> dict:
    return {
        S: PlayerState(S, config, key_s=keys.key_s, x_s=x_s),
        R0: PlayerState(R0, config, key_0=keys.key_0, sample=tuple(r0_sample)),
        R1: PlayerState(R1, config, key_s=keys.key_s, key_0=keys.key_0),
    }


def _other(p: PlayerId) -> PlayerId:
    return R1 if p is R0 else R0


def own_check(st: PlayerState):
    cfg = st.config
    if st.role is R0:
        return lambda m: receiver_check_r0(st.key_0, m, cfg.theta, cfg.residual_length, st.consumed)
    return lambda m: receiver_check_r1(st.key_s, m, cfg.theta, cfg.residual_length)


def send(st: PlayerState, rnd: int) -> dict:
    """Honest outgoing messages of one player in one round."""
    p = st.role
    if rnd == SAMPLE_REVEAL and p is R0:
        trits = tuple(st.key_0.values[list(st.sample)].tolist())
        return {S: SampleReveal(st.sample, trits)}
    if rnd == SAMPLE_VERDICT and p is S:
        return {R0: SampleVerdict(st.alive), R1: SampleVerdict(st.alive)}
    if rnd == PROPOSE and p is S:
        if not st.alive:
            return {R0: None, R1: None}
        proof = sender_propose(st.key_s, st.x_s, st.consumed)
        return {R0: Propose(st.x_s, proof), R1: Propose(st.x_s, proof)}
    if rnd == REPORT and p is not S:
        return {_other(p): Report(st.verdict) if st.alive else None}
    if rnd == FORWARD and p is not S:
        rep = st.other_report
        mismatch = st.alive and not st.verdict.is_bottom and rep is not None and rep.verdict != st.verdict
        return {_other(p): ForwardProof(st.proof) if mismatch else None}
    if rnd == FINAL:
        return {q: FinalStatus(st.status) for q in PLAYERS if q != p}
    return {}


def _valid_reveal(st: PlayerState, msg) -> bool:
    if not isinstance(msg, SampleReveal):
        return False
    idx, trits = msg.indices, msg.trits
    n = st.key_s.n
    if len(idx) != st.config.t or len(trits) != len(idx) or len(set(idx)) != len(idx):
        return False
    if not idx:
        return True
    idx, trits = np.asarray(idx), np.asarray(trits)
    if idx.min() < 0 or idx.max() >= n or trits.min() < 0 or trits.max() > 2:
        return False
    return bool((st.key_s.values[idx] != trits).all())


def receive(st: PlayerState, rnd: int, inbox: dict) -> PlayerState:
    """Honest state transition on the messages delivered to this player."""
    p = st.role
    if rnd == SAMPLE_REVEAL and p is S:
        msg = inbox.get(R0)
        ok = _valid_reveal(st, msg)
        sample = tuple(sorted(msg.indices)) if ok else ()
        return replace(st, alive=ok, sample=sample, status=decided(st.x_s) if ok else ABORTED)
    if rnd == SAMPLE_VERDICT and p is not S:
        msg = inbox.get(S)
        return replace(st, alive=isinstance(msg, SampleVerdict) and msg.passed is True)
    if not st.alive or p is S:
        if rnd == FINAL:
            return replace(st, outcome=settle(st.status, [inbox.get(q) for q in PLAYERS if q != p]))
        return st
    if rnd == PROPOSE:
        msg = inbox.get(S)
        verdict = own_check(st)(msg)
        return replace(st, verdict=verdict, proof=None if verdict.is_bottom else _as_proof(msg))
    if rnd == REPORT:
        msg = inbox.get(_other(p))
        return replace(st, other_report=msg if isinstance(msg, Report) else None)
    if rnd == FORWARD:
        msg = inbox.get(_other(p))
        fwd = msg if isinstance(msg, ForwardProof) else None
        status = resolve(st.verdict, st.other_report, own_check(st), fwd)
        return replace(st, forwarded=fwd, status=status)
    if rnd == FINAL:
        return replace(st, outcome=settle(st.status, [inbox.get(q) for q in PLAYERS if q != p]))
    return st


# --- full runs --------------------------------------------------------------

DEALERS = ("honest", "quantum")


def deal_keys(dealer, n: int, rng: np.random.Generator) -> DealtKeys:
    if callable(dealer):
        return dealer(n, rng)
    if dealer == "honest":
        return deal_honest(n, rng)
    if dealer == "quantum":
        return deal_from_quantum(n, rng)
    if isinstance(dealer, tuple) and dealer[0] == "adversarial":
        return deal_adversarial(n, dealer[1], rng)
    raise ConfigError(f"unknown dealer {dealer!r}")


def run_protocol(config: ProtocolConfig, dealer="honest", adversary=None, x_s: int = 0, rng=None):
    """Execute all rounds; returns ``(outcomes, transcript)``.

    ``adversary`` is a single strategy (see :mod:`detbcast.adversary`) or a
    sequence holding at most one.  ``rng`` may be a seed or a Generator.
    """
    from .adversary import AdversaryView, apply_strategy
    from .transcript import Record, Transcript

    if isinstance(adversary, (list, tuple)):
        if len(adversary) > 1:
            raise ConfigError("at most one player may be corrupted")
        adversary = adversary[0] if adversary else None
    if not _is_bit(x_s):
        raise ConfigError(f"x_s must be a bit, got {x_s!r}")
    dealer_corrupt = isinstance(dealer, tuple)
    if dealer_corrupt and adversary is not None:
        raise ConfigError("an adversarial dealer already corrupts R1; no second adversary allowed")

    rng = np.random.default_rng(rng)
    deal_seed, sample_seed, adv_seed = (int(s) for s in rng.integers(0, 2**63, size=3))
    adv_rng = np.random.default_rng(adv_seed)
    deal_rng = np.random.default_rng(deal_seed)
    custom_deal = getattr(adversary, "deal", None) if adversary is not None else None
    keys = custom_deal(config.n, deal_rng) if custom_deal else deal_keys(dealer, config.n, deal_rng)
    corrupt = adversary.target if adversary is not None else None
    if dealer_corrupt:
        corrupt = R1

    sample = choose_sample(config.n, config.t, np.random.default_rng(sample_seed))
    states = initial_states(config, keys, x_s, sample)
    records = [Record(DEAL, a, b, KeyDelivery(config.n)) for a, b in ROUND_EDGES[DEAL]]
    view = AdversaryView(adversary.target, keys, x_s if adversary and adversary.target is S else None, config, adv_rng) if adversary else None

    for rnd in range(SAMPLE_REVEAL, FINAL + 1):
        outboxes = {}
        for p in PLAYERS:
            out = send(states[p], rnd)
            if adversary is not None and p is adversary.target:
                out = apply_strategy(adversary, rnd, out, view)
            outboxes[p] = out
        inboxes = {p: {} for p in PLAYERS}
        for a, b in ROUND_EDGES[rnd]:
            msg = outboxes[a].get(b)
            inboxes[b][a] = msg
            if msg is not None:
                records.append(Record(rnd, a, b, msg))
                if view is not None:
                    view._observe(rnd, a, b, msg)
        states = {p: receive(states[p], rnd, inboxes[p]) for p in PLAYERS}

    outcomes = {p: states[p].outcome for p in PLAYERS}
    transcript = Transcript(
        config=config,
        x_s=x_s,
        corrupt=corrupt,
        strategy=adversary.describe() if adversary is not None else ({"name": "dealer"} if corrupt else None),
        seeds={"deal": deal_seed, "sample": sample_seed, "adversary": adv_seed},
        keys=keys,
        records=records,
        outcomes=outcomes,
    )
    return outcomes, transcript
