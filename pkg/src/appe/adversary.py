"""Attack strategies attached to the protocol's state and announcement hooks.

An :class:`AttackSpec` names a dishonest set D (never containing Alice) and an
ordered list of strategies.  State hooks run before the honest measurements,
announcement hooks afterwards; within each group the list order is kept.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import InvalidArgumentError
from .oracles import StateFactory, fixed_source
from .quantum import (
    GATES,
    NORM_TOL,
    PureState,
    apply_single_qubit_unitary,
    basis_state,
    make_ghz,
    phase_ghz,
    plus_state,
    rz,
)


@dataclass(frozen=True)
class HonestAll:
    pass


@dataclass(frozen=True)
class AnnounceFlip:
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidArgumentError("flip probability alpha must lie in [0, 1]")


@dataclass(frozen=True)
class LocalUnitary:
    unitaries: dict  # agent -> 2x2 unitary
    trigger: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.trigger <= 1.0:
            raise InvalidArgumentError("trigger probability must lie in [0, 1]")
        clean = {}
        for agent, u in self.unitaries.items():
            u = np.asarray(u, dtype=complex)
            if u.shape != (2, 2) or not np.allclose(u.conj().T @ u, np.eye(2), atol=NORM_TOL, rtol=0):
                raise InvalidArgumentError(f"unitary for agent {agent} is not a 2x2 unitary")
            clean[int(agent)] = u
        object.__setattr__(self, "unitaries", clean)


def _policy_measure(agent, outcome, heard, n):
    return outcome


def _policy_zeros(agent, outcome, heard, n):
    return 0


def _policy_force_even(agent, outcome, heard, n):
    # the last announcer fixes the announced parity to even
    if len(heard) == n - 1:
        return sum(heard.values()) % 2
    return outcome


POLICIES: dict = {
    "measure": _policy_measure,
    "zeros": _policy_zeros,
    "force-even": _policy_force_even,
}


@dataclass(frozen=True)
class DelayedMeasurement:
    """Dishonest agents hold their qubits until every honest bit is public.

    ``policy(agent, outcome, heard, n)`` maps the agent's own X outcome on the
    residual state and the announcements heard so far to the announced bit.
    """

    policy: Callable | str = "measure"

    @property
    def policy_fn(self) -> Callable:
        if callable(self.policy):
            return self.policy
        try:
            return POLICIES[self.policy]
        except KeyError:
            raise InvalidArgumentError(f"unknown delayed-measurement policy {self.policy!r}") from None


@dataclass(frozen=True)
class MaliciousSource:
    """Replace the distributed state.

    With ``bypass_sv`` false the factory feeds state verification; with it
    true the corrupted state is swapped in after verification, modelling the
    residual failure probability of any verifier.
    """

    factory: StateFactory
    bypass_sv: bool = False
    label: str = "custom"


@dataclass(frozen=True)
class KeyLeak:
    """Expose a fraction of key positions to the adversary.

    With ``targeted`` the other strategies fire only on leaked rounds known to
    be PE rounds.
    """

    fraction: float
    targeted: bool = True

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise InvalidArgumentError("leak fraction must lie in [0, 1]")


STATE_STRATEGIES = (LocalUnitary, MaliciousSource)
ANNOUNCE_STRATEGIES = (AnnounceFlip, DelayedMeasurement)


@dataclass
class AttackSpec:
    dishonest: frozenset = frozenset()
    strategies: tuple = (HonestAll(),)
    alice: int | None = None
    config: dict | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.dishonest = frozenset(int(a) for a in self.dishonest)
        self.strategies = tuple(self.strategies) or (HonestAll(),)
        if self.alice is not None:
            self.check_alice(self.alice)
        needs_agents = [s for s in self.strategies if not isinstance(s, (HonestAll, KeyLeak, MaliciousSource))]
        if needs_agents and not self.dishonest:
            raise InvalidArgumentError("strategies acting through agents need a non-empty dishonest set")
        for s in self.of(LocalUnitary):
            extra = set(s.unitaries) - self.dishonest
            if extra:
                raise InvalidArgumentError(f"unitaries target honest agents {sorted(extra)}")

    def check_alice(self, alice: int) -> None:
        if alice in self.dishonest:
            raise InvalidArgumentError(f"Alice (agent {alice}) cannot be in the dishonest set")

    def check_range(self, n: int) -> None:
        bad = [a for a in self.dishonest if not 1 <= a <= n]
        if bad:
            raise InvalidArgumentError(f"dishonest agents {bad} out of range 1..{n}")

    def of(self, kind) -> list:
        return [s for s in self.strategies if isinstance(s, kind)]

    @property
    def is_honest(self) -> bool:
        return all(isinstance(s, HonestAll) for s in self.strategies)

    @property
    def leak(self) -> KeyLeak | None:
        leaks = self.of(KeyLeak)
        return leaks[0] if leaks else None

    @property
    def delayed(self) -> DelayedMeasurement | None:
        d = self.of(DelayedMeasurement)
        return d[0] if d else None

    def source_factory(self, n: int) -> StateFactory | None:
        """Factory feeding state verification, if a malicious source does so."""
        for s in self.of(MaliciousSource):
            if not s.bypass_sv:
                return s.factory
        return None

    @property
    def needs_statevector(self) -> bool:
        return any(isinstance(s, (LocalUnitary, MaliciousSource, DelayedMeasurement)) for s in self.strategies)


def hook_on_state(spec: AttackSpec, state: PureState, rng: np.random.Generator, active: bool = True):
    """Apply state-level attacks; returns ``(state, triggered)``."""
    triggered = False
    if not active:
        return state, triggered
    for s in spec.strategies:
        if isinstance(s, LocalUnitary):
            if rng.random() < s.trigger:
                triggered = True
                for agent, u in sorted(s.unitaries.items()):
                    state = apply_single_qubit_unitary(state, agent, u)
        elif isinstance(s, MaliciousSource) and s.bypass_sv:
            state = s.factory(rng)
            triggered = True
    return state, triggered


def hook_on_announce(
    spec: AttackSpec,
    agent: int,
    outcome: int,
    heard: dict,
    rng: np.random.Generator,
    n: int | None = None,
    active: bool = True,
):
    """Announced bit of a dishonest agent; returns ``(bit, flipped)``."""
    if agent not in spec.dishonest:
        raise InvalidArgumentError(f"agent {agent} is not dishonest")
    n = n if n is not None else len(heard) + 1
    bit, flipped = int(outcome), False
    for s in spec.strategies:
        if isinstance(s, DelayedMeasurement):
            bit = int(s.policy_fn(agent, bit, dict(heard), n))
        elif isinstance(s, AnnounceFlip) and active:
            if rng.random() < s.alpha:
                bit ^= 1
                flipped = True
    return bit, flipped


# -- configuration round trip -----------------------------------------------


def _parse_unitary(spec) -> np.ndarray:
    if isinstance(spec, str):
        try:
            return GATES[spec.upper()]
        except KeyError:
            raise InvalidArgumentError(f"unknown gate name {spec!r}") from None
    if isinstance(spec, dict) and set(spec) == {"rz"}:
        return rz(float(spec["rz"]))
    arr = np.asarray(spec, dtype=float)
    if arr.shape != (2, 2, 2):
        raise InvalidArgumentError("explicit unitaries are [[[re, im], [re, im]], [[re, im], [re, im]]]")
    return arr[..., 0] + 1j * arr[..., 1]


def _parse_source(spec, n: int) -> tuple[StateFactory, str]:
    if spec == "ghz":
        return fixed_source(make_ghz(n)), "ghz"
    if spec == "zeros":
        return fixed_source(basis_state([0] * n)), "zeros"
    if spec == "plus":
        return fixed_source(plus_state(n)), "plus"
    if isinstance(spec, dict) and set(spec) == {"phase_ghz"}:
        return fixed_source(phase_ghz(n, float(spec["phase_ghz"]))), f"phase_ghz:{spec['phase_ghz']}"
    raise InvalidArgumentError(f"unknown source state {spec!r}")


def _check_keys(d: dict, allowed: Iterable[str], where: str) -> None:
    unknown = set(d) - set(allowed)
    if unknown:
        raise InvalidArgumentError(f"unknown keys {sorted(unknown)} in {where}")


def strategy_from_dict(d: dict, n: int):
    kind = d.get("type")
    if kind == "honest":
        _check_keys(d, {"type"}, "honest strategy")
        return HonestAll()
    if kind == "announce_flip":
        _check_keys(d, {"type", "alpha"}, "announce_flip strategy")
        return AnnounceFlip(float(d["alpha"]))
    if kind == "local_unitary":
        _check_keys(d, {"type", "unitaries", "trigger"}, "local_unitary strategy")
        us = {int(a): _parse_unitary(u) for a, u in d["unitaries"].items()}
        return LocalUnitary(us, float(d.get("trigger", 1.0)))
    if kind == "delayed_measurement":
        _check_keys(d, {"type", "policy"}, "delayed_measurement strategy")
        policy = d.get("policy", "measure")
        if policy not in POLICIES:
            raise InvalidArgumentError(f"unknown delayed-measurement policy {policy!r}")
        return DelayedMeasurement(policy)
    if kind == "malicious_source":
        _check_keys(d, {"type", "state", "bypass_sv"}, "malicious_source strategy")
        factory, label = _parse_source(d["state"], n)
        return MaliciousSource(factory, bool(d.get("bypass_sv", False)), label)
    if kind == "key_leak":
        _check_keys(d, {"type", "fraction", "targeted"}, "key_leak strategy")
        return KeyLeak(float(d["fraction"]), bool(d.get("targeted", True)))
    raise InvalidArgumentError(f"unknown strategy type {kind!r}")


def attack_from_dict(d: dict | None, n: int, alice: int | None = None) -> AttackSpec:
    if not d:
        return AttackSpec(alice=alice, config={})
    _check_keys(d, {"dishonest", "strategies"}, "attack")
    strategies = tuple(strategy_from_dict(s, n) for s in d.get("strategies", []))
    spec = AttackSpec(frozenset(d.get("dishonest", [])), strategies, alice, config=d)
    spec.check_range(n)
    return spec
