"""Exhaustive adversary enumeration on tiny residual keys.

The corrupt player may send any syntactically valid message (or nothing)
on each of its channels in every round, independently per receiver.
Because every key assignment is iterated as well, the enumerated adversary
is effectively omniscient: it also covers lucky guesses of keys it cannot
see.  Search is a depth-first walk over rounds, memoised on the honest
players' states.

Size of the raw message space per key assignment at residual length k
(P = 1 + 2 * 2**k proposal/forward options):

* corrupt S:  3**2 verdicts * P**2 proposals * 4**2 final statuses
* corrupt R0: 2 reveals * 4 reports * P forwards * 4**2 final statuses
* corrupt R1: 4 reports * P forwards * 4**2 final statuses

With k <= 4 and 6**k key assignments this stays well under 10**9 leaves,
and memoisation collapses most of it.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .harness import FORBIDDEN, classify
from .keysource import DealtKeys, TritString
from .protocol import (
    ABORTED,
    BOTTOM,
    FINAL,
    FORWARD,
    PLAYERS,
    PROPOSE,
    REPORT,
    ROUND_EDGES,
    ROUND_NAMES,
    SAMPLE_REVEAL,
    SAMPLE_VERDICT,
    FinalStatus,
    ForwardProof,
    PlayerId,
    PlayerState,
    ProofSet,
    Propose,
    ProtocolConfig,
    Report,
    SampleReveal,
    SampleVerdict,
    accept,
    decided,
    initial_states,
    receive,
    send,
)

MAX_RESIDUAL = 4
# finer than "disagreement": two honest players decided different values
CONFLICT = "conflicting_decisions"


class BoundError(ValueError):
    pass


@dataclass
class EnumerationVerdict:
    n_residual: int
    corrupted: PlayerId | None
    theta: float
    key_assignments: int
    patterns: dict = field(default_factory=dict)  # pattern -> witness
    explored: int = 0
    consistent_final: bool = False

    @property
    def forbidden(self) -> list:
        bad = [p for p in (*FORBIDDEN, CONFLICT) if p in self.patterns]
        if self.corrupted is None and "all_honest_aborted" in self.patterns:
            bad.append("all_honest_aborted")
        return bad

    @property
    def ok(self) -> bool:
        return not self.forbidden

    def summary(self) -> dict:
        return {
            "n_residual": self.n_residual,
            "corrupted": self.corrupted.value if self.corrupted else None,
            "theta": self.theta,
            "key_assignments": self.key_assignments,
            "consistent_final": self.consistent_final,
            "reachable": sorted(self.patterns),
            "forbidden": self.forbidden,
            "ok": self.ok,
        }

    def describe_witness(self, pattern: str) -> str:
        keys, x_s, path = self.patterns[pattern]
        lines = [f"{pattern}: key_s={keys.key_s} key_0={keys.key_0} x_s={x_s}"]
        for rnd, out in path:
            msgs = ", ".join(f"->{q}: {m!r}" for q, m in out.items())
            lines.append(f"  round {rnd} ({ROUND_NAMES[rnd]}) adversary {msgs}")
        return "\n".join(lines)


def all_key_assignments(n: int, include_violations: bool = False):
    """Every per-position (k_s, k_0) pair, distinct unless ``include_violations``."""
    pairs = [(a, b) for a in range(3) for b in range(3) if include_violations or a != b]
    for combo in itertools.product(pairs, repeat=n):
        ks = [a for a, _ in combo]
        k0 = [b for _, b in combo]
        keys = DealtKeys(TritString(ks), TritString(k0))
        yield DealtKeys(keys.key_s, keys.key_0, keys.violation_positions())


def _proofs(n: int) -> list:
    subsets = [c for r in range(n + 1) for c in itertools.combinations(range(n), r)]
    return [ProofSet(b, s) for b in (0, 1) for s in subsets]


def _options(rnd: int, receiver: PlayerId, n: int) -> list:
    """Everything a corrupt player may put on one channel in one round."""
    if rnd == SAMPLE_REVEAL:
        return [None, SampleReveal((), ())]
    if rnd == SAMPLE_VERDICT:
        return [None, SampleVerdict(True), SampleVerdict(False)]
    if rnd == PROPOSE:
        return [None] + [Propose(p.claimed_value, p) for p in _proofs(n)]
    if rnd == REPORT:
        return [None, Report(BOTTOM), Report(accept(0)), Report(accept(1))]
    if rnd == FORWARD:
        return [None] + [ForwardProof(p) for p in _proofs(n)]
    if rnd == FINAL:
        return [None, FinalStatus(ABORTED), FinalStatus(decided(0)), FinalStatus(decided(1))]
    return [None]


def _project(rnd: int, st: PlayerState) -> PlayerState:
    # the last round reads nothing but the pre-final status
    if rnd == FINAL:
        return PlayerState(st.role, st.config, status=st.status, alive=st.alive)
    return st


class _Search:
    def __init__(self, corrupted, n, consistent_final=False):
        self.corrupted = corrupted
        self.n = n
        self.honest = [p for p in PLAYERS if p != corrupted]
        self.memo = {}
        self.explored = 0
        self.choices = {}
        for rnd in range(SAMPLE_REVEAL, FINAL + 1):
            receivers = [b for a, b in ROUND_EDGES[rnd] if a == corrupted]
            per = [_options(rnd, b, n) for b in receivers]
            combos = itertools.product(*per)
            if rnd == FINAL and consistent_final:
                combos = (c for c in combos if len(set(c)) <= 1)
            self.choices[rnd] = [dict(zip(receivers, combo)) for combo in combos]

    def explore(self, rnd: int, states: tuple, x_s: int) -> dict:
        if rnd > FINAL:
            outcomes = {p: st.outcome for p, st in zip(self.honest, states)}
            found = {classify(outcomes, self.corrupted, x_s): ()}
            if len({o.value for o in outcomes.values() if not o.aborted}) > 1:
                found[CONFLICT] = ()
            return found
        states = tuple(_project(rnd, st) for st in states)
        key = (rnd, states, x_s)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        self.explored += 1
        honest_out = {p: send(st, rnd) for p, st in zip(self.honest, states)}
        result = {}
        for adv in self.choices[rnd]:
            inbox = {p: {} for p in self.honest}
            for a, b in ROUND_EDGES[rnd]:
                if b == self.corrupted:
                    continue
                inbox[b][a] = adv.get(b) if a == self.corrupted else honest_out[a].get(b)
            nxt = tuple(receive(st, rnd, inbox[p]) for p, st in zip(self.honest, states))
            for pattern, path in self.explore(rnd + 1, nxt, x_s).items():
                if pattern not in result:
                    result[pattern] = (((rnd, adv),) if adv else ()) + path
        self.memo[key] = result
        return result


def enumerate_adversary(
    n_residual: int,
    corrupted=None,
    keys=None,
    x_s=None,
    theta: float = 0.25,
    include_violations: bool = False,
    consistent_final: bool = False,
) -> EnumerationVerdict:
    """Reachable honest-outcome patterns over every adversary message choice.

    ``keys`` fixes one DealtKeys (or an iterable of them); by default every
    distinct-pair assignment of length ``n_residual`` is used.  The sample
    test is already behind us, so t = 0 and the whole key is residual.

    ``consistent_final`` makes the corrupt player announce the same final
    status to both peers, which isolates the split-announcement attack.
    """
    if not 1 <= n_residual <= MAX_RESIDUAL:
        raise BoundError(f"n_residual must be in [1, {MAX_RESIDUAL}] for exhaustive search")
    corrupted = PlayerId(corrupted) if corrupted is not None else None
    if include_violations and corrupted is not PlayerId.R1:
        raise BoundError("condition-3 violations need a corrupt dealer")
    if keys is None:
        key_list = list(all_key_assignments(n_residual, include_violations))
    elif isinstance(keys, DealtKeys):
        key_list = [keys]
    else:
        key_list = list(keys)
    if any(k.n != n_residual for k in key_list):
        raise BoundError("key length does not match n_residual")
    if corrupted is PlayerId.S:
        bits = [0]  # a corrupt sender's input carries no meaning
    elif x_s is None:
        bits = [0, 1]
    else:
        bits = [x_s]
    config = ProtocolConfig(n=n_residual, t=0, theta=theta)
    search = _Search(corrupted, n_residual, consistent_final)
    verdict = EnumerationVerdict(n_residual, corrupted, theta, len(key_list), consistent_final=consistent_final)
    for k in key_list:
        for bit in bits:
            states = initial_states(config, k, bit, ())
            start = tuple(states[p] for p in search.honest)
            for pattern, path in search.explore(SAMPLE_REVEAL, start, bit).items():
                verdict.patterns.setdefault(pattern, (k, bit, path))
    verdict.explored = search.explored
    return verdict
