"""Stand-ins for state verification and anonymous conference key agreement.

Neither published verification scheme nor a real ACKA is reproduced.  The
verifier here is a stabilizer test: of N copies one is kept as the target and
each of the others is checked against a randomly drawn GHZ stabilizer
generator (the all-X operator or a neighbouring Z_t Z_{t+1}).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import InvalidArgumentError, ProtocolAbort
from .quantum import (
    PureState,
    make_ghz,
    pauli_expectation,
    x_outcome_probabilities,
    z_outcome_probabilities,
)

StateFactory = Callable[[np.random.Generator], PureState]

ALL_X = 0  # generator index of X^{(x)n}; index t >= 1 is Z_t Z_{t+1}


def honest_source(n: int) -> StateFactory:
    ghz = make_ghz(n)
    return lambda rng: ghz


def fixed_source(state: PureState) -> StateFactory:
    return lambda rng: state


def stabilizer_generators(n: int) -> list[dict]:
    gens = [{a: "X" for a in range(1, n + 1)}]
    gens += [{t: "Z", t + 1: "Z"} for t in range(1, n)]
    return gens


def stabilizer_pass_probability(state: PureState, generator: int) -> float:
    """Probability that one copy passes the test of one generator: (1 + <g>)/2."""
    ops = stabilizer_generators(state.n)[generator]
    return 0.5 * (1.0 + pauli_expectation(state, ops))


def stabilizer_acceptance_probability(state: PureState, copies: int) -> float:
    """Acceptance probability for i.i.d. copies of ``state`` with uniform generator draws."""
    gens = stabilizer_generators(state.n)
    per_test = np.mean([stabilizer_pass_probability(state, g) for g in range(len(gens))])
    return float(per_test ** (copies - 1))


def _run_test(state: PureState, generator: int, rng: np.random.Generator) -> bool:
    n = state.n
    if generator == ALL_X:
        probs = x_outcome_probabilities(state, range(1, n + 1))
        outcome = int(rng.choice(probs.size, p=probs / probs.sum()))
        return bin(outcome).count("1") % 2 == 0
    probs = z_outcome_probabilities(state, (generator, generator + 1))
    outcome = int(rng.choice(4, p=probs / probs.sum()))
    return outcome in (0, 3)


@dataclass
class VerifiedStateClaim:
    target: PureState | None
    epsilon_sv: float
    accepted: bool
    target_index: int = 0
    generators: tuple = ()
    passed: tuple = ()
    true_distance: float = field(default=0.0, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.epsilon_sv <= 1.0:
            raise InvalidArgumentError("epsilon_sv must lie in [0, 1]")

    def public_record(self) -> dict:
        return {
            "accepted": self.accepted,
            "target_index": self.target_index,
            "generators": list(self.generators),
            "passed": [bool(p) for p in self.passed],
        }


def _ghz_distance(state: PureState) -> float:
    """Trace distance between a pure state and GHZ."""
    ghz = make_ghz(state.n)
    fid = abs(np.vdot(ghz.amplitudes, state.amplitudes)) ** 2
    return float(math.sqrt(max(0.0, 1.0 - fid)))


def sv_stabilizer_verify(
    source: StateFactory,
    copies: int,
    rng: np.random.Generator,
    epsilon: float = 0.0,
) -> VerifiedStateClaim:
    """Draw ``copies`` states, test all but one, release the untested one.

    On acceptance the claim carries epsilon_sv = 0 when the released target is
    exactly GHZ and the configured ``epsilon`` otherwise; a rejection carries 1.
    """
    if copies < 2:
        raise InvalidArgumentError("state verification needs at least 2 copies")
    try:
        states = [source(rng) for _ in range(copies)]
    except StopIteration as exc:
        raise ProtocolAbort("source-exhausted", "state source ran out of copies") from exc
    n = states[0].n
    target_index = int(rng.integers(copies))
    gens = tuple(int(g) for g in rng.integers(0, n, size=copies - 1))
    tested = [s for c, s in enumerate(states) if c != target_index]
    passed = tuple(_run_test(s, g, rng) for s, g in zip(tested, gens))
    target = states[target_index]
    accepted = all(passed)
    dist = _ghz_distance(target)
    if not accepted:
        eps = 1.0
    else:
        eps = 0.0 if dist < 1e-12 else float(epsilon)
    return VerifiedStateClaim(target, eps, accepted, target_index, gens, passed, dist)


def sv_honest_batch(n: int, copies: int, rounds: int, rng: np.random.Generator) -> dict:
    """Public SV records of ``rounds`` verifications against an honest GHZ source.

    GHZ is a +1 eigenstate of every generator, so every test passes and only
    the target index and generator choices are random.
    """
    if copies < 2:
        raise InvalidArgumentError("state verification needs at least 2 copies")
    return {
        "target_index": rng.integers(0, copies, size=rounds),
        "generators": rng.integers(0, n, size=(rounds, copies - 1)),
        "passed": np.ones((rounds, copies - 1), dtype=bool),
        "accepted": np.ones(rounds, dtype=bool),
    }


@dataclass
class RoundKey:
    kappa: np.ndarray
    weight: int
    holders: frozenset = frozenset()

    def __post_init__(self):
        kappa = np.asarray(self.kappa, dtype=np.uint8)
        if int(kappa.sum()) != self.weight:
            raise InvalidArgumentError("key weight does not match the number of ones")
        kappa.setflags(write=False)
        self.kappa = kappa

    @property
    def length(self) -> int:
        return int(self.kappa.size)


def acka_generate(
    participants: Iterable[int],
    L: int,
    k: int,
    leak_fraction: float,
    rng: np.random.Generator,
) -> tuple[RoundKey, np.ndarray]:
    """Uniform weight-k key of length L plus positions leaked to the adversary."""
    if not 0 <= k <= L:
        raise InvalidArgumentError(f"key weight k={k} must lie in 0..L={L}")
    if not 0.0 <= leak_fraction <= 1.0:
        raise InvalidArgumentError("leak_fraction must lie in [0, 1]")
    kappa = np.zeros(L, dtype=np.uint8)
    kappa[rng.choice(L, size=k, replace=False)] = 1
    n_leak = int(round(leak_fraction * L))
    leaked = np.sort(rng.choice(L, size=n_leak, replace=False)) if n_leak else np.zeros(0, dtype=np.int64)
    return RoundKey(kappa, k, frozenset(participants)), leaked


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def key_entropy_length(L: int, k: int) -> float:
    """Bits needed to share a weight-k key of length L after compression."""
    if not 0 <= k <= L:
        raise InvalidArgumentError(f"key weight k={k} must lie in 0..L={L}")
    if L == 0:
        return 0.0
    return binary_entropy(k / L) * L
