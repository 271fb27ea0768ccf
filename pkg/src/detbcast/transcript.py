"""Run transcripts and their JSON form.

Schema (``detbcast.transcript/1``), keys written in sorted order::

    {
      "schema": "detbcast.transcript/1",
      "config": {"n": int, "t": int, "theta": float},
      "x_s": 0 | 1,
      "corrupt": "S" | "R0" | "R1" | null,
      "strategy": {"name": str, ...params} | null,
      "seeds": {"deal": int, "sample": int, "adversary": int},
      "keys": {"key_s": "0120...", "key_0": "1201...", "violations": [int, ...]},
      "records": [{"round": int, "sender": str, "receiver": str,
                   "kind": str, "payload": {...}}, ...],
      "outcomes": {"S": "decided:1" | "aborted", "R0": ..., "R1": ...}
    }

Keys are kept for post-hoc oracle checks only; no player reads them from here.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .keysource import DealtKeys, TritString
from .protocol import (
    DEAL,
    MESSAGE_TYPES,
    PLAYERS,
    ROUND_EDGES,
    Outcome,
    PlayerId,
    ProtocolConfig,
)

SCHEMA = "detbcast.transcript/1"


class TranscriptError(ValueError):
    pass


class TopologyError(TranscriptError):
    pass


@dataclass(frozen=True)
class ChannelTopology:
    """Three two-way authenticated classical links plus R1's two key-dealing links."""

    classical: frozenset = frozenset(
        {frozenset({PlayerId.S, PlayerId.R0}), frozenset({PlayerId.S, PlayerId.R1}), frozenset({PlayerId.R0, PlayerId.R1})}
    )
    quantum: frozenset = frozenset({(PlayerId.R1, PlayerId.S), (PlayerId.R1, PlayerId.R0)})

    def allows(self, rnd: int, sender, receiver) -> bool:
        if rnd == DEAL:
            return (sender, receiver) in self.quantum
        return sender != receiver and frozenset({sender, receiver}) in self.classical


TOPOLOGY = ChannelTopology()


@dataclass(frozen=True)
class Record:
    round: int
    sender: PlayerId
    receiver: PlayerId
    message: object

    @property
    def kind(self) -> str:
        return self.message.kind

    def to_json(self) -> dict:
        return {
            "round": self.round,
            "sender": self.sender.value,
            "receiver": self.receiver.value,
            "kind": self.kind,
            "payload": self.message.to_payload(),
        }

    @classmethod
    def from_json(cls, d: dict) -> Record:
        try:
            rnd = int(d["round"])
            sender, receiver = PlayerId(d["sender"]), PlayerId(d["receiver"])
            msg = MESSAGE_TYPES[d["kind"]].from_payload(d["payload"])
        except (KeyError, ValueError, TypeError) as exc:
            raise TranscriptError(f"malformed record {d!r}: {exc}") from exc
        return cls(rnd, sender, receiver, msg)


@dataclass
class Transcript:
    config: ProtocolConfig
    x_s: int
    corrupt: PlayerId | None
    strategy: dict | None
    seeds: dict
    keys: DealtKeys
    records: list = field(default_factory=list)
    outcomes: dict = field(default_factory=dict)

    def validate(self) -> None:
        """Rounds never go backwards, every edge exists in the topology and fits its round."""
        last = DEAL
        for rec in self.records:
            if rec.round < last:
                raise TranscriptError(f"round {rec.round} recorded after round {last}")
            last = rec.round
            if not TOPOLOGY.allows(rec.round, rec.sender, rec.receiver):
                raise TopologyError(f"no channel {rec.sender}->{rec.receiver} in round {rec.round}")
            if (rec.sender, rec.receiver) not in ROUND_EDGES.get(rec.round, ()):
                raise TopologyError(f"{rec.sender}->{rec.receiver} does not talk in round {rec.round}")

    def rounds(self) -> list:
        return sorted({r.round for r in self.records})

    def honest_players(self) -> list:
        return [p for p in PLAYERS if p != self.corrupt]

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "config": {"n": self.config.n, "t": self.config.t, "theta": self.config.theta},
            "x_s": self.x_s,
            "corrupt": self.corrupt.value if self.corrupt else None,
            "strategy": self.strategy,
            "seeds": dict(self.seeds),
            "keys": {
                "key_s": str(self.keys.key_s),
                "key_0": str(self.keys.key_0),
                "violations": sorted(self.keys.violations),
            },
            "records": [r.to_json() for r in self.records],
            "outcomes": {p.value: str(o) for p, o in self.outcomes.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> Transcript:
        try:
            if d.get("schema") != SCHEMA:
                raise TranscriptError(f"unknown schema {d.get('schema')!r}")
            cfg = d["config"]
            config = ProtocolConfig(int(cfg["n"]), int(cfg["t"]), float(cfg["theta"]))
            keys = DealtKeys(
                TritString.parse(d["keys"]["key_s"]),
                TritString.parse(d["keys"]["key_0"]),
                frozenset(d["keys"]["violations"]),
            )
            if keys.n != config.n:
                raise TranscriptError("key length does not match config")
            t = cls(
                config=config,
                x_s=int(d["x_s"]),
                corrupt=PlayerId(d["corrupt"]) if d["corrupt"] else None,
                strategy=d["strategy"],
                seeds={k: int(v) for k, v in d["seeds"].items()},
                keys=keys,
                records=[Record.from_json(r) for r in d["records"]],
                outcomes={PlayerId(p): Outcome.parse(o) for p, o in d["outcomes"].items()},
            )
        except TranscriptError:
            raise
        except (KeyError, ValueError, TypeError, AttributeError) as exc:
            raise TranscriptError(f"malformed transcript: {exc}") from exc
        t.validate()
        return t

    @classmethod
    def from_json(cls, text: str) -> Transcript:
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise TranscriptError(f"not JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise TranscriptError("transcript must be a JSON object")
        return cls.from_dict(d)
