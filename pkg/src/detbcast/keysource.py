"""Dealing, attacking and checking the two anti-correlated trit keys.

R1 deals ``key_s`` to the sender over one quantum link and ``key_0`` to R0
over the other.  Positions are 0-based throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import qutrit_core


@dataclass(frozen=True, eq=False)
class TritString:
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.int8).reshape(-1)
        if vals.size == 0:
            raise ValueError("trit string must be nonempty")
        if ((vals < 0) | (vals > 2)).any():
            raise ValueError("trit string contains a value outside {0,1,2}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return int(self.values.size)

    def __len__(self):
        return self.n

    def __getitem__(self, j):
        return int(self.values[j])

    def __eq__(self, other):
        return isinstance(other, TritString) and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())

    def __str__(self):
        return "".join(str(int(v)) for v in self.values)

    def __repr__(self):
        return f"TritString('{self}')"

    @classmethod
    def parse(cls, text: str) -> TritString:
        return cls([int(ch) for ch in text])


@dataclass(frozen=True, eq=False)
class DealtKeys:
    key_s: TritString
    key_0: TritString
    violations: frozenset = frozenset()

    def __post_init__(self):
        if self.key_s.n != self.key_0.n:
            raise ValueError("key lengths differ")
        object.__setattr__(self, "violations", frozenset(int(j) for j in self.violations))

    @property
    def n(self) -> int:
        return self.key_s.n

    def violation_positions(self) -> frozenset:
        """Positions where k0 == ks, read from the keys themselves."""
        return frozenset(int(j) for j in np.flatnonzero(self.key_s.values == self.key_0.values))

    def condition3_holds(self) -> bool:
        return bool((self.key_s.values != self.key_0.values).all())

    def __eq__(self, other):
        return (
            isinstance(other, DealtKeys)
            and self.key_s == other.key_s
            and self.key_0 == other.key_0
            and self.violations == other.violations
        )

    def __hash__(self):
        return hash((self.key_s, self.key_0, self.violations))


@dataclass(frozen=True)
class SampleTestResult:
    sampled_indices: frozenset
    passed: bool
    residual_key_length: int


def _check_length(n) -> int:
    if int(n) != n or n < 1:
        raise ValueError(f"key length must be a positive integer, got {n!r}")
    return int(n)


def deal_honest(n: int, rng: np.random.Generator) -> DealtKeys:
    """Each position uniform over the 6 ordered pairs of distinct trits."""
    n = _check_length(n)
    ks = rng.integers(0, 3, size=n)
    k0 = (ks + rng.integers(1, 3, size=n)) % 3
    return DealtKeys(TritString(ks), TritString(k0))


def deal_from_quantum(n: int, rng: np.random.Generator) -> DealtKeys:
    """R1 picks c uniformly per position and measures the singlet over c."""
    n = _check_length(n)
    cs = rng.integers(0, 3, size=n)
    k0 = np.empty(n, dtype=np.int64)
    ks = np.empty(n, dtype=np.int64)
    for c in range(3):
        where = np.flatnonzero(cs == c)
        if where.size:
            draws = qutrit_core.sample_outcomes(qutrit_core.singlet_state(c), rng, where.size)
            k0[where] = draws[:, 0]
            ks[where] = draws[:, 1]
    return DealtKeys(TritString(ks), TritString(k0))


def deal_adversarial(n: int, violation_set, rng: np.random.Generator) -> DealtKeys:
    """Honest dealing except k0 == ks on ``violation_set``."""
    n = _check_length(n)
    violation_set = frozenset(int(j) for j in violation_set)
    if any(j < 0 or j >= n for j in violation_set):
        raise ValueError(f"violation positions out of range for n={n}")
    honest = deal_honest(n, rng)
    k0 = honest.key_0.values.copy()
    idx = np.fromiter(violation_set, dtype=np.int64, count=len(violation_set))
    k0[idx] = honest.key_s.values[idx]
    return DealtKeys(honest.key_s, TritString(k0), violation_set)


def choose_sample(n: int, t: int, rng: np.random.Generator) -> tuple[int, ...]:
    """Uniform t-subset of range(n), sorted."""
    if t < 0 or t > n:
        raise ValueError(f"sample size {t} outside [0, {n}]")
    return tuple(np.sort(rng.choice(n, size=t, replace=False)).tolist())


def condition3_sample_test(keys: DealtKeys, t: int, rng: np.random.Generator) -> SampleTestResult:
    idx = choose_sample(keys.n, t, rng)
    sel = np.asarray(idx, dtype=np.int64)
    passed = bool((keys.key_0.values[sel] != keys.key_s.values[sel]).all())
    return SampleTestResult(frozenset(idx), passed, keys.n - t)


def detection_probability(n: int, m: int, t: int) -> Fraction:
    """Chance that a uniform t-sample hits at least one of m bad positions among n."""
    if n < 0 or not 0 <= m <= n or not 0 <= t <= n:
        raise ValueError(f"invalid parameters n={n}, m={m}, t={t}")
    return 1 - Fraction(math.comb(n - m, t), math.comb(n, t))


def sample_test_failure_rate(n: int, m: int, t: int, trials: int, rng: np.random.Generator) -> float:
    """Vectorised Monte Carlo of the sample test against m violations (first m positions).

    Which m positions are bad does not matter since the sample is uniform.
    """
    if not 0 <= m <= n or not 0 <= t <= n or trials < 1:
        raise ValueError("invalid sweep parameters")
    if t == 0 or m == 0:
        return 0.0
    # the t smallest keys of an iid uniform row form a uniform t-subset
    order = np.argsort(rng.random((trials, n)), axis=1)[:, :t]
    return float((order < m).any(axis=1).mean())


def dump_keys(keys: DealtKeys) -> str:
    """One line per position: the sender's trit then R0's trit."""
    return "".join(f"{s}{z}\n" for s, z in zip(keys.key_s.values, keys.key_0.values))


def load_keys(text: str) -> DealtKeys:
    ks, k0 = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if len(line) != 2 or any(ch not in "012" for ch in line):
            raise ValueError(f"line {lineno}: expected two trit characters, got {line!r}")
        ks.append(int(line[0]))
        k0.append(int(line[1]))
    if not ks:
        raise ValueError("empty key file")
    keys = DealtKeys(TritString(ks), TritString(k0))
    return DealtKeys(keys.key_s, keys.key_0, keys.violation_positions())
