"""detbcast command line.

Exit codes: 0 ok, 1 predicate violation (or failed check / replay mismatch),
2 configuration error, 3 I/O error.

Option precedence: explicit flag, then ``--config`` file (key=value lines),
then ``DETBCAST_SEED`` for the seed, then built-in defaults.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import os
import sys

import numpy as np

from . import qutrit_core as qc
from .adversary import STRATEGIES, make_strategy
from .harness import replay, run_campaign
from .keysource import detection_probability, sample_test_failure_rate
from .modelcheck import BoundError, enumerate_adversary
from .protocol import ConfigError, ProtocolConfig
from .transcript import Transcript, TranscriptError

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
SEED_ENV = "DETBCAST_SEED"
DEFAULT_SEED = 0

DEFAULTS = {
    "n": 300,
    "t": None,  # ceil(n / 10)
    "theta": 0.25,
    "xs": None,
    "dealer": "honest",
    "violations": None,
    "strategy": "none",
    "target": None,
    "b0": None,
    "b1": None,
    "claimed_bit": None,
    "forge_size": None,
    "violation_count": None,
    "trials": 10_000,
    "format": "jsonl",
}

# the sweep walks the whole (m, t) grid, so it defaults to a small key
SWEEP_DEFAULTS = {"n": 12, "trials": 100_000}

# config-file keys and how to read them
_CASTS = {
    "n": int, "t": int, "theta": float, "xs": int, "dealer": str, "violations": str,
    "strategy": str, "target": str, "b0": int, "b1": int, "claimed_bit": int,
    "forge_size": int, "violation_count": int, "trials": int, "seed": int,
    "format": str, "m": str, "corrupted": str,
}


class UsageError(Exception):
    pass


def _int_list(text: str) -> list:
    try:
        return [int(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def load_config_file(path: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _CASTS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                out[key] = _CASTS[key](value)
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return out


def resolve(args: argparse.Namespace, keys, defaults=None) -> dict:
    file_cfg = load_config_file(args.config) if args.config else {}
    defaults = {**DEFAULTS, **(defaults or {})}
    cfg = {}
    for k in keys:
        v = getattr(args, k, None)
        if v is None:
            v = file_cfg.get(k, defaults.get(k))
        cfg[k] = v
    if "seed" in keys and cfg["seed"] is None:
        env = os.environ.get(SEED_ENV)
        try:
            cfg["seed"] = int(env) if env not in (None, "") else DEFAULT_SEED
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return cfg


def _protocol_config(cfg: dict) -> ProtocolConfig:
    n = cfg["n"]
    t = cfg["t"] if cfg["t"] is not None else (math.ceil(n / 10) if isinstance(n, int) else None)
    return ProtocolConfig(n=n, t=t, theta=cfg["theta"])


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# ---- subcommands -------------------------------------------------------


def cmd_run(args) -> int:
    cfg = resolve(args, [*DEFAULTS, "seed"])
    config = _protocol_config(cfg)
    if cfg["xs"] not in (None, 0, 1):
        raise ConfigError(f"--xs must be 0 or 1, got {cfg['xs']}")
    if cfg["trials"] < 1:
        raise ConfigError("--trials must be >= 1")
    if cfg["format"] not in ("jsonl", "csv"):
        raise ConfigError(f"unknown format {cfg['format']!r}")
    dealer = cfg["dealer"]
    if dealer == "adversarial":
        if cfg["violations"] is None:
            raise ConfigError("--dealer adversarial needs --violations")
        bad = _int_list(cfg["violations"])
        if any(j < 0 or j >= config.n for j in bad):
            raise ConfigError(f"violation positions must lie in [0, {config.n})")
        dealer = ("adversarial", frozenset(bad))
    elif dealer not in ("honest", "quantum"):
        raise ConfigError(f"unknown dealer {dealer!r}")
    params = {
        "target": cfg["target"], "b0": cfg["b0"], "b1": cfg["b1"],
        "claimed_bit": cfg["claimed_bit"], "violation_count": cfg["violation_count"],
    }
    name = cfg["strategy"]
    if name in STRATEGIES:
        cls = STRATEGIES[name]
        fields = getattr(cls, "__dataclass_fields__", {})
        if cfg["forge_size"] is not None:
            params["size"] = cfg["forge_size"]
        if "count" in fields:
            params["count"] = params.pop("violation_count")
        params = {k: v for k, v in params.items() if k in fields and v is not None}
    else:
        params = {}
    try:
        strategy = make_strategy(name, **params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    result = run_campaign(
        config, [strategy], cfg["trials"], cfg["seed"], dealer=dealer, x_s=cfg["xs"],
        keep_transcripts=bool(args.transcripts),
    )
    stats, kept = result if args.transcripts else (result, [])
    stats.config["strategy"] = strategy.describe() if strategy else None
    text = stats.to_json_lines() if cfg["format"] == "jsonl" else stats.to_csv()
    _write(args.out, text)
    if args.transcripts:
        _write(args.transcripts, "".join(t.to_json() + "\n" for t in kept))
    return EXIT_OK if stats.ok else EXIT_VIOLATION


def cmd_sweep_detection(args) -> int:
    cfg = resolve(args, ["n", "trials", "seed"], SWEEP_DEFAULTS)
    n = cfg["n"]
    if n < 1:
        raise ConfigError("n must be >= 1")
    ms = _int_list(args.m) if args.m else list(range(n + 1))
    ts = _int_list(args.t) if args.t else list(range(n + 1))
    for v in (*ms, *ts):
        if not 0 <= v <= n:
            raise ConfigError(f"grid value {v} outside [0, {n}]")
    trials = cfg["trials"]
    rng = np.random.default_rng(cfg["seed"])
    buf = io.StringIO()
    buf.write(f"# n={n} trials={trials} seed={cfg['seed']}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "m", "t", "analytic", "analytic_exact", "empirical", "sigma", "z"])
    for m in ms:
        for t in ts:
            p = detection_probability(n, m, t)
            emp = sample_test_failure_rate(n, m, t, trials, rng)
            sigma = math.sqrt(float(p) * (1 - float(p)) / trials)
            z = (emp - float(p)) / sigma if sigma else (0.0 if emp == float(p) else math.inf)
            w.writerow([n, m, t, f"{float(p):.10f}", str(p), f"{emp:.10f}", f"{sigma:.3e}", f"{z:.3f}"])
    _write(args.out, buf.getvalue())
    return EXIT_OK


# cyclic orders carry +, transposed orders carry -
_EXPECTED_SIGNS = {(0, 1, 2): 1, (1, 2, 0): 1, (2, 0, 1): 1, (0, 2, 1): -1, (2, 1, 0): -1, (1, 0, 2): -1}


def quantum_checks(perturb: float = 0.0) -> list:
    """(name, passed, max deviation) for the source identities at 1e-12."""
    tol = 1e-12
    state = qc.aharonov_state()
    if perturb:
        amps = state.amplitudes + perturb * qc.basis_state(0, 0, 0).amplitudes
        state = qc.StateVector(3, amps / np.linalg.norm(amps))
    checks = []
    dev = 0.0
    for a, b, c in itertools.product(range(3), repeat=3):
        want = _EXPECTED_SIGNS.get((a, b, c), 0) / math.sqrt(6)
        dev = max(dev, abs(state.amplitude(a, b, c) - want))
    checks.append(("aharonov_amplitudes", dev <= tol, dev))
    dist = qc.measurement_distribution(state)
    dev = max(abs(p - (1 / 6 if len(set(o)) == 3 else 0.0)) for o, p in dist.probabilities.items())
    checks.append(("uniform_permutations", dev <= tol, dev))
    dev = qc.partial_trace(state, (0, 1)).max_deviation(qc.singlet_mixture())
    checks.append(("marginal_equals_singlet_mixture", dev <= tol, dev))
    return checks


def cmd_verify_quantum(args) -> int:
    checks = quantum_checks(args.perturb)
    lines = [f"{'PASS' if ok else 'FAIL'} {name} max_deviation={dev:.3e}" for name, ok, dev in checks]
    _write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK if all(ok for _, ok, _ in checks) else EXIT_VIOLATION


def cmd_modelcheck(args) -> int:
    cfg = resolve(args, ["theta"])
    corrupted = None if args.corrupted.lower() == "none" else args.corrupted
    try:
        verdict = enumerate_adversary(
            args.n_residual, corrupted, theta=cfg["theta"], consistent_final=args.consistent_final
        )
    except BoundError as exc:
        raise ConfigError(str(exc)) from None
    lines = [json.dumps(verdict.summary(), sort_keys=True)]
    for pattern in verdict.forbidden:
        lines.append(verdict.describe_witness(pattern))
    _write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK if verdict.ok else EXIT_VIOLATION


def cmd_replay(args) -> int:
    bad, total, out = 0, 0, []
    with open(args.transcripts, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                t = Transcript.from_json(line)
            except TranscriptError as exc:
                raise TranscriptError(f"line {lineno}: {exc}") from None
            res = replay(t)
            total += 1
            outcomes = {p.value: str(o) for p, o in res.outcomes.items()}
            if t.to_json() != line.rstrip("\n"):
                res.mismatches.append("re-serialisation differs from stored bytes")
            if not res.ok:
                bad += 1
            out.append(json.dumps({"line": lineno, "ok": res.ok, "outcomes": outcomes,
                                   "mismatches": res.mismatches}, sort_keys=True))
    out.append(json.dumps({"type": "total", "transcripts": total, "mismatched": bad}, sort_keys=True))
    _write(args.out, "\n".join(out) + "\n")
    return EXIT_OK if bad == 0 else EXIT_VIOLATION


# ---- parser ------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="detbcast", description="Three-party detectable broadcast simulator.")
    p.add_argument("--config", help="key=value file overriding built-in defaults")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run a seeded adversary campaign")
    r.add_argument("--n", type=int)
    r.add_argument("--t", type=int, help="sample size (default ceil(n/10))")
    r.add_argument("--theta", type=float)
    r.add_argument("--xs", type=int, help="sender input; random per trial if omitted")
    r.add_argument("--dealer", choices=["honest", "quantum", "adversarial"])
    r.add_argument("--violations", help="comma-separated positions for --dealer adversarial")
    r.add_argument("--strategy", help=f"none or one of: {', '.join(STRATEGIES)}")
    r.add_argument("--target", choices=["S", "R0", "R1"])
    r.add_argument("--b0", type=int)
    r.add_argument("--b1", type=int)
    r.add_argument("--claimed-bit", type=int)
    r.add_argument("--forge-size", type=int, help="size of forged or garbage proofs")
    r.add_argument("--violation-count", type=int)
    r.add_argument("--trials", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--format", choices=["jsonl", "csv"])
    r.add_argument("--out", help="stats file (default stdout)")
    r.add_argument("--transcripts", help="write every run's transcript as JSON lines")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep-detection", help="sample-test detection table")
    s.add_argument("--n", type=int)
    s.add_argument("--m", help="comma-separated violation counts (default 0..n)")
    s.add_argument("--t", help="comma-separated sample sizes (default 0..n)")
    s.add_argument("--trials", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep_detection)

    q = sub.add_parser("verify-quantum", help="check the qutrit source identities")
    q.add_argument("--perturb", type=float, default=0.0, help="negative control: distort the state by this amount")
    q.add_argument("--out")
    q.set_defaults(func=cmd_verify_quantum)

    m = sub.add_parser("modelcheck", help="exhaustive adversary enumeration")
    m.add_argument("n_residual", type=int)
    m.add_argument("corrupted", help="S, R0, R1 or none")
    m.add_argument("--theta", type=float)
    m.add_argument("--consistent-final", action="store_true",
                   help="corrupt player must announce the same final status to both peers")
    m.add_argument("--out")
    m.set_defaults(func=cmd_modelcheck)

    rp = sub.add_parser("replay", help="replay stored transcripts")
    rp.add_argument("transcripts")
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "modelcheck" and args.corrupted.lower() not in ("s", "r0", "r1", "none"):
            raise ConfigError(f"corrupted must be S, R0, R1 or none, got {args.corrupted!r}")
        if args.command == "modelcheck":
            args.corrupted = args.corrupted.upper() if args.corrupted.lower() != "none" else "none"
        return args.func(args)
    except UsageError as exc:
        print(f"detbcast: usage error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"detbcast: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, TranscriptError) as exc:
        print(f"detbcast: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
