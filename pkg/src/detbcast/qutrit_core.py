"""Dense qutrit states for the three-party key source.

Slot order is fixed as (R0, S, R1): slot 0 belongs to receiver R0, slot 1
to the sender and slot 2 to the dealer R1.  Tracing out slot 2 therefore
leaves the two-qutrit state shipped to R0 and S.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import sqrt

import numpy as np

NORM_TOL = 1e-9
ALGEBRA_TOL = 1e-12
PSD_TOL = -1e-10


def _index(trits) -> int:
    idx = 0
    for t in trits:
        idx = 3 * idx + int(t)
    return idx


def _trits(index: int, num_qutrits: int) -> tuple[int, ...]:
    out = []
    for _ in range(num_qutrits):
        out.append(index % 3)
        index //= 3
    return tuple(reversed(out))


def _check_trit(c) -> int:
    if isinstance(c, bool) or int(c) != c or c not in (0, 1, 2):
        raise ValueError(f"not a trit: {c!r}")
    return int(c)


@dataclass(frozen=True, eq=False)
class StateVector:
    """Amplitudes over the 3**k computational basis, leftmost trit = slot 0."""

    num_qutrits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.num_qutrits < 1:
            raise ValueError("num_qutrits must be positive")
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != 3**self.num_qutrits:
            raise ValueError(
                f"expected {3**self.num_qutrits} amplitudes, got {amps.size}"
            )
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    def amplitude(self, *trits: int) -> complex:
        if len(trits) != self.num_qutrits:
            raise ValueError("wrong number of trits")
        return complex(self.amplitudes[_index(_check_trit(t) for t in trits)])

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def swap(self, i: int, j: int) -> StateVector:
        """Exchange the contents of slots ``i`` and ``j``."""
        k = self.num_qutrits
        axes = list(range(k))
        axes[i], axes[j] = axes[j], axes[i]
        tensor = self.amplitudes.reshape([3] * k).transpose(axes)
        return StateVector(k, tensor.reshape(-1))

    def density_matrix(self) -> DensityMatrix:
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        rho = np.array(self.entries, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError("density matrix must be square")
        if np.max(np.abs(rho - rho.conj().T)) > ALGEBRA_TOL:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1) > ALGEBRA_TOL:
            raise ValueError("density matrix trace is not 1")
        if np.linalg.eigvalsh(rho).min() < PSD_TOL:
            raise ValueError("density matrix is not positive semidefinite")
        rho.flags.writeable = False
        object.__setattr__(self, "entries", rho)

    @property
    def dimension(self) -> int:
        return self.entries.shape[0]

    def purity(self) -> float:
        return float(np.trace(self.entries @ self.entries).real)

    def max_deviation(self, other: DensityMatrix) -> float:
        return float(np.max(np.abs(self.entries - other.entries)))


@dataclass(frozen=True)
class OutcomeDistribution:
    """Probability of every basis outcome (all 3**k of them, zeros included)."""

    probabilities: dict

    def __post_init__(self):
        p = np.fromiter(self.probabilities.values(), dtype=float)
        if (p < 0).any():
            raise ValueError("negative probability")
        if abs(p.sum() - 1) > ALGEBRA_TOL:
            raise ValueError("probabilities do not sum to 1")

    def __getitem__(self, outcome) -> float:
        return self.probabilities.get(tuple(outcome), 0.0)

    def support(self, tol: float = ALGEBRA_TOL) -> set:
        return {o for o, p in self.probabilities.items() if p > tol}


def basis_state(*trits: int) -> StateVector:
    amps = np.zeros(3 ** len(trits), dtype=complex)
    amps[_index(_check_trit(t) for t in trits)] = 1.0
    return StateVector(len(trits), amps)


def aharonov_state() -> StateVector:
    """Totally antisymmetric three-qutrit state: signed sum over permutations of (0,1,2)."""
    amps = np.zeros(27, dtype=complex)
    for perm in itertools.permutations(range(3)):
        amps[_index(perm)] = _permutation_sign(perm) / sqrt(6)
    return StateVector(3, amps)


def _permutation_sign(perm) -> int:
    sign = 1
    for i, j in itertools.combinations(range(len(perm)), 2):
        if perm[i] > perm[j]:
            sign = -sign
    return sign


def singlet_state(c: int) -> StateVector:
    """2**-1/2 (|c+1, c+2> - |c+2, c+1>), slot 0 = R0, slot 1 = S."""
    c = _check_trit(c)
    a, b = (c + 1) % 3, (c + 2) % 3
    amps = np.zeros(9, dtype=complex)
    amps[_index((a, b))] = 1 / sqrt(2)
    amps[_index((b, a))] = -1 / sqrt(2)
    return StateVector(2, amps)


def singlet_mixture() -> DensityMatrix:
    """Uniform mixture of the three two-qutrit singlets, as prepared by R1."""
    rho = sum(singlet_state(c).density_matrix().entries for c in range(3)) / 3
    return DensityMatrix(rho)


def _require_normalized(state: StateVector) -> None:
    if abs(state.norm_squared() - 1) > NORM_TOL:
        raise ValueError(f"state is not normalized (norm^2={state.norm_squared()!r})")


def measurement_distribution(state: StateVector) -> OutcomeDistribution:
    _require_normalized(state)
    probs = np.abs(state.amplitudes) ** 2
    probs = probs / probs.sum()
    k = state.num_qutrits
    return OutcomeDistribution({_trits(i, k): float(p) for i, p in enumerate(probs)})


def partial_trace(state: StateVector, keep) -> DensityMatrix:
    """Reduced density matrix on the slots in ``keep`` (kept in ascending order)."""
    k = state.num_qutrits
    keep = sorted(set(keep))
    if not keep or len(keep) >= k or keep[0] < 0 or keep[-1] >= k:
        raise ValueError("keep must be a nonempty proper subset of the slots")
    _require_normalized(state)
    traced = [i for i in range(k) if i not in keep]
    psi = state.amplitudes.reshape([3] * k).transpose(keep + traced)
    psi = psi.reshape(3 ** len(keep), 3 ** len(traced))
    return DensityMatrix(psi @ psi.conj().T)


def sample_outcomes(state: StateVector, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` basis outcomes; returns an int array of shape (size, k)."""
    _require_normalized(state)
    probs = np.abs(state.amplitudes) ** 2
    idx = rng.choice(probs.size, size=size, p=probs / probs.sum())
    k = state.num_qutrits
    digits = np.empty((size, k), dtype=np.int64)
    for slot in range(k - 1, -1, -1):
        digits[:, slot] = idx % 3
        idx = idx // 3
    return digits


def sample_outcome(state: StateVector, rng: np.random.Generator) -> tuple[int, ...]:
    return tuple(int(t) for t in sample_outcomes(state, rng, 1)[0])
