"""Small dense statevector engine for GHZ-based protocol rounds.

Bit ordering: agent ``i`` (1-based) owns bit position ``i - 1`` counted from
the most significant bit of a basis index.  For ``n = 3`` the index ``0b100``
is the string where agent 1 holds ``1``.  Equivalently, reshaping an amplitude
vector to ``(2,) * n`` puts agent ``i`` on axis ``i - 1``.

States are immutable values; every operation returns a new state.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import hadamard

from .errors import InvalidArgumentError

NORM_TOL = 1e-10
EXACT_TOL = 1e-12
MAX_DENSE_QUBITS = 20

SQRT1_2 = 1.0 / np.sqrt(2.0)

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
GATES = dict(PAULI)
GATES["H"] = np.array([[1, 1], [1, -1]], dtype=complex) * SQRT1_2
GATES["S"] = np.array([[1, 0], [0, 1j]], dtype=complex)
GATES["T"] = np.array([[1, 0], [0, np.exp(1j * np.pi / 4)]], dtype=complex)


def rz(phi: float) -> np.ndarray:
    """Phase gate diag(1, e^{i phi}); the local encoding unitary with theta/m = phi."""
    return np.array([[1, 0], [0, np.exp(1j * phi)]], dtype=complex)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PureState:
    n: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.n < 1:
            raise InvalidArgumentError("a state needs at least one qubit")
        amps = _frozen(np.asarray(self.amplitudes).reshape(-1))
        if amps.shape != (2**self.n,):
            raise InvalidArgumentError(f"expected {2**self.n} amplitudes, got {amps.shape[0]}")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise InvalidArgumentError(f"state norm {norm!r} differs from 1")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.n)

    def density(self) -> "DensityMatrix":
        return DensityMatrix(self.n, np.outer(self.amplitudes, self.amplitudes.conj()))

    def allclose(self, other: "PureState", atol: float = EXACT_TOL) -> bool:
        return self.n == other.n and np.allclose(self.amplitudes, other.amplitudes, atol=atol, rtol=0)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    d: int
    entries: np.ndarray

    def __post_init__(self):
        rho = _frozen(self.entries)
        dim = 2**self.d
        if rho.shape != (dim, dim):
            raise InvalidArgumentError(f"expected a {dim}x{dim} matrix, got {rho.shape}")
        if not np.allclose(rho, rho.conj().T, atol=NORM_TOL, rtol=0):
            raise InvalidArgumentError("density matrix is not Hermitian")
        if abs(np.trace(rho).real - 1.0) > NORM_TOL:
            raise InvalidArgumentError("density matrix trace differs from 1")
        if np.linalg.eigvalsh(rho).min() < -NORM_TOL:
            raise InvalidArgumentError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "entries", rho)

    @classmethod
    def diagonal(cls, probs: Sequence[float]) -> "DensityMatrix":
        """Embed a classical distribution over 2^d outcomes."""
        p = np.asarray(probs, dtype=float)
        d = int(round(np.log2(p.size)))
        return cls(d, np.diag(p).astype(complex))


@dataclass(frozen=True)
class OutcomeVector:
    """Measured bits, one per measured agent, in increasing agent order."""

    bits: tuple

    @property
    def parity(self) -> int:
        return sum(self.bits) % 2

    def __len__(self) -> int:
        return len(self.bits)

    def __str__(self) -> str:
        return "".join(str(b) for b in self.bits)


def _check_agents(n: int, agents: Iterable[int]) -> list[int]:
    out = sorted(set(int(a) for a in agents))
    if not out:
        raise InvalidArgumentError("agent subset is empty")
    if out[0] < 1 or out[-1] > n:
        raise InvalidArgumentError(f"agents {out} out of range 1..{n}")
    return out


def _check_dense(n: int) -> None:
    if n > MAX_DENSE_QUBITS:
        raise InvalidArgumentError(
            f"dense statevector limited to {MAX_DENSE_QUBITS} qubits; use the fast path"
        )


def make_ghz(n: int) -> PureState:
    if n < 1:
        raise InvalidArgumentError("GHZ state needs n >= 1")
    _check_dense(n)
    amps = np.zeros(2**n, dtype=complex)
    amps[0] = amps[-1] = SQRT1_2
    return PureState(n, amps)


def basis_state(bits: Sequence[int]) -> PureState:
    n = len(bits)
    _check_dense(n)
    amps = np.zeros(2**n, dtype=complex)
    amps[int("".join(str(int(b)) for b in bits), 2)] = 1.0
    return PureState(n, amps)


def plus_state(n: int) -> PureState:
    _check_dense(n)
    return PureState(n, np.full(2**n, 2 ** (-n / 2), dtype=complex))


def phase_ghz(n: int, phase: float) -> PureState:
    """(|0..0> + e^{i phase}|1..1>)/sqrt(2) in closed form."""
    _check_dense(n)
    amps = np.zeros(2**n, dtype=complex)
    amps[0] = SQRT1_2
    amps[-1] = SQRT1_2 * np.exp(1j * phase)
    return PureState(n, amps)


@lru_cache(maxsize=64)
def _bit_mask(n: int, agent: int) -> np.ndarray:
    idx = np.arange(2**n)
    mask = ((idx >> (n - agent)) & 1).astype(bool)
    mask.setflags(write=False)
    return mask


def apply_local_phase(state: PureState, agent: int, theta: float, m: int) -> PureState:
    """Apply |0><0| + e^{i theta/m}|1><1| to one agent's qubit."""
    if not 1 <= agent <= state.n:
        raise InvalidArgumentError(f"agent {agent} out of range 1..{state.n}")
    if m < 1:
        raise InvalidArgumentError("phase divisor m must be >= 1")
    amps = state.amplitudes.copy()
    amps[_bit_mask(state.n, agent)] *= np.exp(1j * theta / m)
    return PureState(state.n, amps)


def apply_single_qubit_unitary(state: PureState, agent: int, u) -> PureState:
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2) or not np.allclose(u.conj().T @ u, np.eye(2), atol=NORM_TOL, rtol=0):
        raise InvalidArgumentError("u must be a 2x2 unitary")
    if not 1 <= agent <= state.n:
        raise InvalidArgumentError(f"agent {agent} out of range 1..{state.n}")
    psi = np.tensordot(u, state.tensor, axes=([1], [agent - 1]))
    psi = np.moveaxis(psi, 0, agent - 1)
    return PureState(state.n, psi.reshape(-1))


@lru_cache(maxsize=32)
def _walsh(k: int) -> np.ndarray:
    h = hadamard(2**k).astype(complex) * 2 ** (-k / 2)
    h.setflags(write=False)
    return h


def _split(state: PureState, subset: list[int]) -> np.ndarray:
    """Matrix with rows indexed by the subset bits and columns by the rest."""
    n = state.n
    axes = [a - 1 for a in subset]
    psi = np.moveaxis(state.tensor, axes, list(range(len(axes))))
    return psi.reshape(2 ** len(axes), 2 ** (n - len(axes)))


def _index_bits(index: int, k: int) -> tuple:
    return tuple((index >> (k - 1 - b)) & 1 for b in range(k))


def x_outcome_probabilities(state: PureState, subset: Iterable[int]) -> np.ndarray:
    """Exact Born probabilities of X-basis outcomes on ``subset`` (index = bitstring)."""
    agents = _check_agents(state.n, subset)
    rows = _walsh(len(agents)) @ _split(state, agents)
    return np.sum(np.abs(rows) ** 2, axis=1)


def z_outcome_probabilities(state: PureState, subset: Iterable[int]) -> np.ndarray:
    agents = _check_agents(state.n, subset)
    return np.sum(np.abs(_split(state, agents)) ** 2, axis=1)


def measure_x_subset(state: PureState, subset: Iterable[int], rng: np.random.Generator):
    """Measure ``subset`` in the X basis.

    Returns the outcome bits (increasing agent order) and the renormalised state
    of the unmeasured agents, or ``None`` when every qubit was measured.
    """
    agents = _check_agents(state.n, subset)
    k = len(agents)
    rows = _walsh(k) @ _split(state, agents)
    probs = np.sum(np.abs(rows) ** 2, axis=1)
    idx = int(rng.choice(probs.size, p=probs / probs.sum()))
    outcome = OutcomeVector(_index_bits(idx, k))
    if k == state.n:
        return outcome, None
    residual = rows[idx] / np.sqrt(probs[idx])
    return outcome, PureState(state.n - k, residual)


def project_x_outcomes(state: PureState, subset: Iterable[int], bits: Sequence[int]) -> PureState:
    """Normalised (<o|_X (x) I) |psi> for fixed X-basis outcomes on ``subset``."""
    agents = _check_agents(state.n, subset)
    if len(agents) == state.n:
        raise InvalidArgumentError("projection onto every qubit leaves no residual state")
    if len(bits) != len(agents):
        raise InvalidArgumentError("one outcome bit per projected agent is required")
    idx = int("".join(str(int(b)) for b in bits), 2)
    row = (_walsh(len(agents)) @ _split(state, agents))[idx]
    norm = np.linalg.norm(row)
    if norm < NORM_TOL:
        raise ArithmeticError("projection has zero norm")
    return PureState(state.n - len(agents), row / norm)


def reduced_density(state: PureState, subset: Iterable[int]) -> DensityMatrix:
    agents = _check_agents(state.n, subset)
    if len(agents) == state.n:
        raise InvalidArgumentError("subset is the full system; use PureState.density()")
    mat = _split(state, agents)
    return DensityMatrix(len(agents), mat @ mat.conj().T)


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    if a.entries.shape != b.entries.shape:
        raise InvalidArgumentError("trace distance needs equal dimensions")
    eig = np.linalg.eigvalsh(a.entries - b.entries)
    return float(min(1.0, 0.5 * np.abs(eig).sum()))


def pauli_expectation(state: PureState, ops: dict) -> float:
    """<psi| (x)_a P_a |psi> for a map agent -> 'X' | 'Y' | 'Z'."""
    out = state
    for agent, name in ops.items():
        out = apply_single_qubit_unitary(out, agent, PAULI[name])
    return float(np.vdot(state.amplitudes, out.amplitudes).real)


def sample_ghz_phase_fastpath(n: int, phase: float, rng: np.random.Generator, size: int | None = None):
    """X-basis outcomes of the phase-encoded GHZ state in O(n) per sample.

    Parity is 1 with probability (1 - cos phase)/2; given the parity the string
    is uniform over matching strings.  Only valid for honest GHZ-diagonal
    dynamics.  With ``size`` an ``(size, n)`` uint8 array is returned.
    """
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    p_odd = min(1.0, max(0.0, (1.0 - np.cos(phase)) / 2.0))
    count = 1 if size is None else int(size)
    out = np.empty((count, n), dtype=np.uint8)
    out[:, : n - 1] = rng.integers(0, 2, size=(count, n - 1), dtype=np.uint8)
    parity = (rng.random(count) < p_odd).astype(np.uint8)
    out[:, n - 1] = (parity + out[:, : n - 1].sum(axis=1)) % 2
    if size is None:
        return OutcomeVector(tuple(int(b) for b in out[0]))
    return out
