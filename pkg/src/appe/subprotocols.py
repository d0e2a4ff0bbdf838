"""Classical anonymous sub-protocols: NOTIFICATION, PARITY and VOTE.

Private pairwise channels are plain in-memory delivery; every message is kept
so that per-agent views can be assembled later.  Agents are 1-based in the
public API and 0-based inside arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgumentError, ProtocolAbort, RevealBarrierError


@dataclass(frozen=True)
class RoleAssignment:
    n: int
    alice: int
    participants: tuple  # indicator vector j, length n

    def __post_init__(self):
        j = tuple(int(b) for b in self.participants)
        object.__setattr__(self, "participants", j)
        if self.n < 1:
            raise InvalidArgumentError("n must be >= 1")
        if len(j) != self.n or any(b not in (0, 1) for b in j):
            raise InvalidArgumentError("participants must be a 0/1 vector of length n")
        if not 1 <= self.alice <= self.n:
            raise InvalidArgumentError(f"alice {self.alice} out of range 1..{self.n}")
        if sum(j) < 1:
            raise InvalidArgumentError("at least one participant is required")

    @classmethod
    def from_set(cls, n: int, alice: int, participants: Iterable[int]) -> "RoleAssignment":
        members = set(int(p) for p in participants)
        if any(not 1 <= p <= n for p in members):
            raise InvalidArgumentError(f"participants {sorted(members)} out of range 1..{n}")
        return cls(n, alice, tuple(int(a in members) for a in range(1, n + 1)))

    @property
    def m(self) -> int:
        return sum(self.participants)

    @property
    def participant_set(self) -> frozenset:
        return frozenset(a for a in range(1, self.n + 1) if self.participants[a - 1])

    def is_participant(self, agent: int) -> bool:
        return bool(self.participants[agent - 1])


class SimultaneousBroadcast:
    """Commit-then-reveal channel.

    Values are readable only after :meth:`reveal`, which requires every agent
    to have committed.  ``failing`` lists agents that never commit, to exercise
    the abort path.
    """

    def __init__(self, agents: Iterable[int], failing: Iterable[int] = ()):
        self.agents = tuple(agents)
        self.failing = frozenset(failing)
        self._committed: dict = {}
        self._revealed = False

    def commit(self, agent: int, value) -> None:
        if self._revealed:
            raise RevealBarrierError("commit after reveal")
        if agent not in self.agents:
            raise InvalidArgumentError(f"agent {agent} is not on this channel")
        if agent in self.failing:
            return
        self._committed[agent] = value

    def read(self, agent: int):
        if not self._revealed:
            raise RevealBarrierError(f"value of agent {agent} read before the reveal barrier")
        return self._committed[agent]

    def reveal(self) -> dict:
        missing = [a for a in self.agents if a not in self._committed]
        if missing:
            raise ProtocolAbort("broadcast-failure", f"agents {missing} did not commit")
        self._revealed = True
        return dict(self._committed)


# -- NOTIFICATION -----------------------------------------------------------


@dataclass
class NotificationResult:
    z: tuple  # z[k-1] = 1 iff agent k is notified
    r: np.ndarray  # r[i, j, k]: bit sent by agent i+1 to agent j+1 about target k+1
    t: np.ndarray  # t[j, k]: bit sent by agent j+1 to agent k+1

    def sent_by(self, agent: int) -> dict:
        return {"r": self.r[agent - 1], "t": self.t[agent - 1]}

    def received_by(self, agent: int) -> dict:
        return {"r": self.r[:, agent - 1, :], "t": self.t[:, agent - 1]}


def notification(roles: RoleAssignment, rng: np.random.Generator) -> NotificationResult:
    n = roles.n
    r = rng.integers(0, 2, size=(n, n, n), dtype=np.uint8)
    target = np.zeros((n, n), dtype=np.uint8)
    target[roles.alice - 1] = np.asarray(roles.participants, dtype=np.uint8)
    # the bit each sender keeps for itself closes its XOR constraint
    for i in range(n):
        others = np.delete(r[i], i, axis=0).sum(axis=0) % 2
        r[i, i] = (target[i] + others) % 2
    t = r.sum(axis=0) % 2  # t[j, k] = XOR_i r[i, j, k]
    z = t.sum(axis=0) % 2
    return NotificationResult(tuple(int(b) for b in z), r, t.astype(np.uint8))


# -- PARITY -----------------------------------------------------------------


def parity_shares(inputs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random share strings for a batch of PARITY executions.

    ``inputs`` has shape ``(s, n)``; the result ``r`` has shape ``(s, n, n)``
    with ``r[.., i, j]`` the bit agent i sends to agent j, uniform over strings
    whose parity equals agent i's input.
    """
    inputs = np.asarray(inputs, dtype=np.uint8)
    s, n = inputs.shape
    r = rng.integers(0, 2, size=(s, n, n), dtype=np.uint8)
    r[:, :, n - 1] = (inputs + r[:, :, : n - 1].sum(axis=2)) % 2
    return r


def share_announcements(r: np.ndarray) -> np.ndarray:
    """Each agent's z: parity of every bit received, including its own."""
    return (r.sum(axis=-2) % 2).astype(np.uint8)


@dataclass
class ParityResult:
    y: int
    z: tuple
    shares: np.ndarray  # shares[i, j]


def parity_protocol(inputs: Sequence[int], rng: np.random.Generator, failing: Iterable[int] = ()) -> ParityResult:
    x = np.asarray(inputs, dtype=np.uint8)
    if x.ndim != 1 or x.size < 1 or np.any(x > 1):
        raise InvalidArgumentError("one input bit per agent is required")
    n = x.size
    r = parity_shares(x[None, :], rng)[0]
    z = share_announcements(r)
    channel = SimultaneousBroadcast(range(1, n + 1), failing)
    for a in range(1, n + 1):
        channel.commit(a, int(z[a - 1]))
    announced = channel.reveal()
    y = 0
    for a in range(1, n + 1):
        y ^= announced[a]
    return ParityResult(y, tuple(int(b) for b in z), r)


# -- VOTE -------------------------------------------------------------------


def vote_window(n: int) -> float:
    return 1.0 / (2.0 * math.e**2 * n)


def vote_pv(v: int, n: int) -> float:
    """Probability that the round parity is 1 when v agents hold the candidate."""
    return 0.5 * (1.0 - ((n - 2) / n) ** v)


def vote_pv_printed(v: int, n: int) -> float:
    """Unsimplified form 1/2 ((n-2)/n)^v ((n/(n-2))^v - 1); needs n >= 3."""
    return 0.5 * ((n - 2) / n) ** v * ((n / (n - 2)) ** v - 1.0)


def vote_rounds_for(n: int, failure: float = 1e-3) -> int:
    """Smallest s for which Hoeffding puts both tallies in their window w.p. >= 1 - failure."""
    w = vote_window(n)
    return int(math.ceil(math.log(4.0 / failure) / (2.0 * w * w)))


def tally_from_sigma(sigma: float, n: int) -> int:
    """The unique v in 0..n with |sigma - p_v| < window, else ProtocolAbort."""
    w = vote_window(n)
    hits = [v for v in range(n + 1) if abs(sigma - vote_pv(v, n)) < w]
    if not hits:
        raise ProtocolAbort("vote-abort", f"no tally within window of sigma={sigma:.6f}")
    if len(hits) > 1:
        raise ProtocolAbort("vote-abort", f"ambiguous tally {hits} for sigma={sigma:.6f}")
    return hits[0]


@dataclass
class VoteResult:
    tally: tuple | None
    abort_reason: str | None
    abort_detail: str = ""
    sigma: tuple = ()
    masks: np.ndarray = field(default=None, repr=False)  # p values, shape (2, s, n)
    shares: np.ndarray = field(default=None, repr=False)  # (2, s, n, n)
    stored: np.ndarray = field(default=None, repr=False)  # z[b]_i^j, shape (2, s, n)

    @property
    def ok(self) -> bool:
        return self.abort_reason is None


def vote(choices: Sequence[int], s: int, rng: np.random.Generator, failing: Iterable[int] = ()) -> VoteResult:
    x = np.asarray(choices, dtype=np.uint8)
    if s < 1:
        raise InvalidArgumentError("VOTE needs s >= 1 rounds")
    if x.ndim != 1 or x.size < 1 or np.any(x > 1):
        raise InvalidArgumentError("one choice bit per agent is required")
    n = x.size
    masks = np.empty((2, s, n), dtype=np.uint8)
    shares = np.empty((2, s, n, n), dtype=np.uint8)
    stored = np.empty((2, s, n), dtype=np.uint8)
    for b in (0, 1):
        # Phase A
        coin = rng.random((s, n)) < 1.0 / n
        masks[b] = (coin & (x == b)[None, :]).astype(np.uint8)
        shares[b] = parity_shares(masks[b], rng)
        stored[b] = share_announcements(shares[b])

    # Phase B
    channel = SimultaneousBroadcast(range(1, n + 1), failing)
    for a in range(1, n + 1):
        channel.commit(a, stored[:, :, a - 1])
    try:
        announced = channel.reveal()
    except ProtocolAbort as exc:
        return VoteResult(None, exc.reason, exc.detail, (), masks, shares, stored)
    bcast = np.stack([announced[a] for a in range(1, n + 1)], axis=-1)

    # Phase C
    round_parity = bcast.sum(axis=-1) % 2  # (2, s)
    sigma = tuple(float(v) for v in round_parity.mean(axis=1))
    try:
        tally = tuple(tally_from_sigma(sig, n) for sig in sigma)
    except ProtocolAbort as exc:
        return VoteResult(None, exc.reason, exc.detail, sigma, masks, shares, stored)
    if sum(tally) != n:
        return VoteResult(None, "vote-abort", f"tally {tally} does not sum to {n}", sigma, masks, shares, stored)
    return VoteResult(tally, None, "", sigma, masks, shares, stored)
