"""End-to-end protocol runs: notification, vote, key, verified rounds, estimation.

Two execution paths share one transcript layout.  Runs whose adversary only
touches classical announcements (or nothing) use a vectorised sampler; runs
that act on the quantum state go round by round through the statevector
engine.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .adversary import AttackSpec, DelayedMeasurement, hook_on_announce, hook_on_state
from .errors import InvalidArgumentError, ProtocolAbort
from .estimation import EstimationReport, estimate
from .oracles import acka_generate, honest_source, sv_honest_batch, sv_stabilizer_verify
from .quantum import (
    MAX_DENSE_QUBITS,
    PureState,
    apply_local_phase,
    measure_x_subset,
    sample_ghz_phase_fastpath,
)
from .rng import Streams
from .subprotocols import RoleAssignment, notification, vote, vote_rounds_for

PE, PV = "PE", "PV"
SV_POLICIES = ("discard", "abort")
MUTATIONS = ("alice-truthful",)


@dataclass(frozen=True)
class OracleSettings:
    sv_copies: int = 2
    sv_epsilon: float = 0.0
    sv_reject_policy: str = "discard"
    leak_fraction: float = 0.0

    def __post_init__(self):
        if self.sv_copies < 2:
            raise InvalidArgumentError("sv_copies must be >= 2")
        if not 0.0 <= self.sv_epsilon <= 1.0:
            raise InvalidArgumentError("sv_epsilon must lie in [0, 1]")
        if self.sv_reject_policy not in SV_POLICIES:
            raise InvalidArgumentError(f"sv_reject_policy must be one of {SV_POLICIES}")
        if not 0.0 <= self.leak_fraction <= 1.0:
            raise InvalidArgumentError("leak_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class ProtocolConfig:
    roles: RoleAssignment
    thetas: tuple
    L: int
    k: int
    delta_threshold: float = 0.5
    vote_rounds: int | None = None
    m_min: int | tuple = 3
    correct_bias: bool = False
    oracle: OracleSettings = OracleSettings()
    seed: int = 0
    mutation: str | None = None
    enforce_vote: bool = True
    vote_failing: tuple = ()  # agents that never commit in VOTE's broadcast

    def __post_init__(self):
        n = self.roles.n
        object.__setattr__(self, "thetas", tuple(float(t) for t in self.thetas))
        if len(self.thetas) != n:
            raise InvalidArgumentError(f"expected {n} parameters, got {len(self.thetas)}")
        if self.k < 0:
            raise InvalidArgumentError("k must be >= 0")
        if self.k > self.L:
            raise InvalidArgumentError(f"k={self.k} exceeds L={self.L}")
        if self.L - self.k < 1:
            raise InvalidArgumentError("nu = L - k must be >= 1")
        if self.vote_rounds is not None and self.vote_rounds < 1:
            raise InvalidArgumentError("vote_rounds must be >= 1")
        mins = self.m_min if isinstance(self.m_min, (tuple, list)) else (self.m_min,) * n
        mins = tuple(int(v) for v in mins)
        if len(mins) != n or any(v < 1 for v in mins):
            raise InvalidArgumentError("m_min must be a positive integer or one per agent")
        object.__setattr__(self, "m_min", mins)
        if not 0.0 <= self.delta_threshold <= 1.0:
            raise InvalidArgumentError("delta_threshold must lie in [0, 1]")
        if self.mutation is not None and self.mutation not in MUTATIONS:
            raise InvalidArgumentError(f"unknown mutation {self.mutation!r}; known: {MUTATIONS}")

    @property
    def n(self) -> int:
        return self.roles.n

    @property
    def nu(self) -> int:
        return self.L - self.k

    @property
    def effective_thetas(self) -> tuple:
        """Parameters after non-participants zero theirs."""
        return tuple(t if self.roles.is_participant(a) else 0.0 for a, t in enumerate(self.thetas, start=1))

    @property
    def theta_bar(self) -> float:
        return sum(self.effective_thetas) / self.roles.m

    @property
    def s(self) -> int:
        return self.vote_rounds if self.vote_rounds is not None else vote_rounds_for(self.n)


@dataclass(frozen=True)
class RoundRecord:
    index: int
    kind: str
    announcements: tuple  # Alice's slot holds her announced bit
    alice_true_outcome: int
    result: int  # chi for PE, gamma for PV
    true_outcomes: tuple = ()
    triggered: bool = False

    def __post_init__(self):
        if self.kind not in (PE, PV):
            raise InvalidArgumentError(f"round kind must be PE or PV, got {self.kind!r}")


# -- transcript -------------------------------------------------------------


def _pack(value):
    """JSON-friendly, deterministic encoding of arrays and scalars."""
    if isinstance(value, np.ndarray):
        if value.dtype == bool or (value.dtype == np.uint8 and (value.size == 0 or value.max() <= 1)):
            bits = np.packbits(value.astype(np.uint8).reshape(-1))
            return {"shape": list(value.shape), "bits": bits.tobytes().hex()}
        if np.issubdtype(value.dtype, np.integer):
            return {"shape": list(value.shape), "int": value.reshape(-1).tolist()}
        return {"shape": list(value.shape), "float": value.reshape(-1).tolist()}
    if isinstance(value, dict):
        return {str(k): _pack(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_pack(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, (frozenset, set)):
        return sorted(value)
    return value


def canonical_bytes(value) -> bytes:
    """Stable byte encoding of a (nested) register, for hashing and comparison."""
    if isinstance(value, np.ndarray):
        return f"{value.dtype.str}{value.shape}".encode() + np.ascontiguousarray(value).tobytes()
    if isinstance(value, dict):
        parts = [b"{"]
        for key in sorted(value, key=str):
            parts += [str(key).encode(), b":", canonical_bytes(value[key]), b";"]
        return b"".join(parts + [b"}"])
    if isinstance(value, (list, tuple)):
        return b"[" + b",".join(canonical_bytes(v) for v in value) + b"]"
    return repr(_pack(value)).encode()


@dataclass
class Transcript:
    """Registers of one run.

    ``public`` holds C_NV (vote broadcasts), C_SV and C_PP; ``views`` maps each
    agent to its private registers; ``adversary`` is the view E.
    """

    n: int
    L: int
    public: dict = field(default_factory=dict)
    views: dict = field(default_factory=dict)
    adversary: dict = field(default_factory=dict)

    def view_of(self, agent: int) -> dict:
        return self.views[agent]

    def restricted(self, agents: Sequence[int]) -> dict:
        """Everything visible to a coalition: public registers, their views, and E."""
        return {
            "public": self.public,
            "views": {a: self.views[a] for a in sorted(agents)},
            "E": self.adversary,
        }

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "L": self.L,
            "public": _pack(self.public),
            "views": {str(a): _pack(v) for a, v in sorted(self.views.items())},
            "adversary": _pack(self.adversary),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(canonical_bytes(self.restricted(range(1, self.n + 1)))).hexdigest()

    def rounds(self, alice: int) -> list[RoundRecord]:
        """Per-round records as Alice sees them (executed rounds only)."""
        pp = self.public.get("PP")
        av = self.views.get(alice, {})
        if pp is None or "rounds" not in av:
            return []
        ann = pp["announcements"]
        executed = pp["executed"]
        kinds = av["rounds"]["kappa"]
        true_a = av["rounds"]["true_outcome"]
        res = av["rounds"]["result"]
        trig = self.adversary.get("triggered", np.zeros(self.L, dtype=bool))
        out = []
        for j in np.flatnonzero(executed):
            out.append(
                RoundRecord(
                    int(j),
                    PV if kinds[j] else PE,
                    tuple(int(b) for b in ann[j]),
                    int(true_a[j]),
                    int(res[j]),
                    triggered=bool(trig[j]),
                )
            )
        return out


# -- single rounds ----------------------------------------------------------


def _as_streams(rng) -> Streams:
    if isinstance(rng, Streams):
        return rng
    if isinstance(rng, np.random.Generator):
        return Streams(int(rng.integers(0, 2**63 - 1)))
    return Streams(int(rng or 0))


def _run_round(
    kind: str,
    state: PureState,
    cfg: ProtocolConfig,
    adversary: AttackSpec,
    rng,
    index: int = 0,
    m: int | None = None,
    active: bool = True,
) -> RoundRecord:
    st = _as_streams(rng)
    n, alice = cfg.n, cfg.roles.alice
    if state.n != n:
        raise InvalidArgumentError(f"state has {state.n} qubits, config has {n} agents")
    m = m if m is not None else cfg.roles.m
    if kind == PE:
        for a, theta in enumerate(cfg.effective_thetas, start=1):
            if theta:
                state = apply_local_phase(state, a, theta, m)
    state, triggered = hook_on_state(adversary, state, st.gen("adversary", "state"), active)

    delayed = adversary.delayed is not None
    late = sorted(adversary.dishonest) if delayed else []
    early = [a for a in range(1, n + 1) if a not in late]
    outcomes = {}
    bits, residual = measure_x_subset(state, early, st.gen("measure"))
    outcomes.update(zip(early, bits.bits))

    announced = {}
    alice_rng = st.gen("alice")
    adv_rng = st.gen("adversary", "announce")
    for a in early:
        if a == alice:
            truthful = cfg.mutation == "alice-truthful"
            announced[a] = outcomes[a] if truthful else int(alice_rng.integers(0, 2))
        elif a in adversary.dishonest:
            announced[a], flipped = hook_on_announce(adversary, a, outcomes[a], announced, adv_rng, n, active)
            triggered |= flipped
        else:
            announced[a] = outcomes[a]
    if late:
        # the held qubits are measured only after every honest bit is public
        late_bits, _ = measure_x_subset(residual, range(1, len(late) + 1), st.gen("delayed"))
        for a, b in zip(late, late_bits.bits):
            outcomes[a] = b
            announced[a], flipped = hook_on_announce(adversary, a, b, announced, adv_rng, n, active)
            triggered |= flipped

    result = outcomes[alice]
    for a in range(1, n + 1):
        if a != alice:
            result ^= announced[a]
    return RoundRecord(
        index,
        kind,
        tuple(announced[a] for a in range(1, n + 1)),
        outcomes[alice],
        int(result),
        tuple(outcomes[a] for a in range(1, n + 1)),
        bool(triggered),
    )


def run_pe_round(state, cfg, adversary=None, rng=None, index=0, m=None, active=True) -> RoundRecord:
    return _run_round(PE, state, cfg, adversary or AttackSpec(), rng, index, m, active)


def run_pv_round(state, cfg, adversary=None, rng=None, index=0, m=None, active=True) -> RoundRecord:
    return _run_round(PV, state, cfg, adversary or AttackSpec(), rng, index, m, active)


# -- full protocol ----------------------------------------------------------


def _classical_phase(cfg: ProtocolConfig, adversary: AttackSpec, root: Streams, tr: Transcript, rep: EstimationReport):
    """NOTIFICATION, VOTE and the participant-count guard.  Returns m or None on abort."""
    n, roles = cfg.n, cfg.roles
    note = notification(roles, root.gen("notification"))
    notified = note.z
    for a in range(1, n + 1):
        view = tr.views[a]
        view["P"] = {"alice": a == roles.alice, "notified": notified[a - 1], "theta": cfg.thetas[a - 1]}
        if a == roles.alice:
            view["P"]["participants"] = np.asarray(roles.participants, dtype=np.uint8)
        view["T"] = {
            "sent": note.r[a - 1].copy(),
            "received": note.r[:, a - 1, :].copy(),
            "t_sent": note.t[a - 1].copy(),
            "t_received": note.t[:, a - 1].copy(),
        }

    result = vote(np.asarray(notified, dtype=np.uint8), cfg.s, root.gen("vote"), cfg.vote_failing)
    for a in range(1, n + 1):
        tr.views[a]["NV"] = {
            "mask": result.masks[:, :, a - 1].copy(),
            "shares_sent": result.shares[:, :, a - 1, :].copy(),
            "shares_received": result.shares[:, :, :, a - 1].copy(),
        }
    tr.public["NV"] = {
        "broadcast": result.stored.copy() if result.abort_reason != "broadcast-failure" else np.zeros((2, 0, n), np.uint8),
        "sigma": list(result.sigma),
        "tally": list(result.tally) if result.tally else None,
        "abort": result.abort_reason,
    }

    if result.abort_reason == "broadcast-failure":
        rep.abort_reason, rep.abort_detail = "broadcast-failure", result.abort_detail
        return None
    if result.ok:
        m = int(result.tally[1])
        rep.vote_tally = list(result.tally)
    elif cfg.enforce_vote:
        rep.abort_reason, rep.abort_detail = result.abort_reason, result.abort_detail
        return None
    else:
        m = roles.m
        rep.flags.append("vote-abort-ignored")
    rep.m = m
    short = [a for a in sorted(roles.participant_set) if m < cfg.m_min[a - 1]]
    if short:
        rep.abort_reason = "m-too-small"
        rep.abort_detail = f"m={m} below the minimum of participants {short}"
        return None
    return m


def _active_mask(adversary: AttackSpec, kappa: np.ndarray, leaked: np.ndarray) -> np.ndarray:
    L = kappa.size
    leak = adversary.leak
    if leak is None or not leak.targeted:
        return np.ones(L, dtype=bool)
    active = np.zeros(L, dtype=bool)
    active[leaked] = True
    return active & (kappa == 0)


def _fast_rounds(cfg, adversary, root, kappa, active, m):
    n, L, alice = cfg.n, cfg.L, cfg.roles.alice
    phase = sum(cfg.effective_thetas) / m
    true = np.empty((L, n), dtype=np.uint8)
    pe = kappa == 0
    true[pe] = sample_ghz_phase_fastpath(n, phase, root.gen("rounds", "PE"), size=int(pe.sum()))
    true[~pe] = sample_ghz_phase_fastpath(n, 0.0, root.gen("rounds", "PV"), size=int((~pe).sum()))
    announced = true.copy()
    triggered = np.zeros(L, dtype=bool)
    for strat in adversary.strategies:
        alpha = getattr(strat, "alpha", None)
        if alpha is None:
            continue
        for d in sorted(adversary.dishonest):
            flips = (root.gen("adversary", "flip", d).random(L) < alpha) & active
            announced[:, d - 1] ^= flips.astype(np.uint8)
            triggered |= flips
    if cfg.mutation != "alice-truthful":
        announced[:, alice - 1] = root.gen("alice", "announce").integers(0, 2, size=L, dtype=np.uint8)
    others = np.delete(announced, alice - 1, axis=1).sum(axis=1)
    result = ((true[:, alice - 1] + others) % 2).astype(np.uint8)
    sv = sv_honest_batch(n, cfg.oracle.sv_copies, L, root.gen("sv"))
    return true, announced, result, triggered, sv, np.ones(L, dtype=bool)


def _statevector_rounds(cfg, adversary, root, kappa, active, m, rep):
    n, L = cfg.n, cfg.L
    if n > MAX_DENSE_QUBITS:
        raise InvalidArgumentError("state-level attacks need the dense engine (n <= 20)")
    source = adversary.source_factory(n) or honest_source(n)
    copies = cfg.oracle.sv_copies
    true = np.zeros((L, n), dtype=np.uint8)
    announced = np.zeros((L, n), dtype=np.uint8)
    result = np.zeros(L, dtype=np.uint8)
    triggered = np.zeros(L, dtype=bool)
    executed = np.zeros(L, dtype=bool)
    sv = {
        "target_index": np.zeros(L, dtype=np.int64),
        "generators": np.zeros((L, copies - 1), dtype=np.int64),
        "passed": np.zeros((L, copies - 1), dtype=bool),
        "accepted": np.zeros(L, dtype=bool),
    }
    for j in range(L):
        rs = root.fork("round", j)
        claim = sv_stabilizer_verify(source, copies, rs.gen("sv"), cfg.oracle.sv_epsilon)
        sv["target_index"][j] = claim.target_index
        sv["generators"][j] = claim.generators
        sv["passed"][j] = claim.passed
        sv["accepted"][j] = claim.accepted
        if not claim.accepted:
            rep.sv_rejections += 1
            if cfg.oracle.sv_reject_policy == "abort":
                rep.abort_reason, rep.abort_detail = "sv-reject", f"state verification rejected round {j}"
                break
            continue
        kind = PV if kappa[j] else PE
        rec = _run_round(kind, claim.target, cfg, adversary, rs, j, m, bool(active[j]))
        true[j], announced[j] = rec.true_outcomes, rec.announcements
        result[j], triggered[j], executed[j] = rec.result, rec.triggered, True
    return true, announced, result, triggered, sv, executed


def run_appe(cfg: ProtocolConfig, adversary: AttackSpec | None = None, rng=None):
    """Run the whole protocol; returns ``(EstimationReport, Transcript)``.

    Aborts never raise: the reason is recorded in the report and the
    transcript holds every register filled up to that point.
    """
    adversary = adversary or AttackSpec()
    adversary.check_alice(cfg.roles.alice)
    adversary.check_range(cfg.n)
    root = _as_streams(cfg.seed if rng is None else rng)
    n, L, roles = cfg.n, cfg.L, cfg.roles
    tr = Transcript(n, L, views={a: {} for a in range(1, n + 1)})
    rep = EstimationReport()

    m = _classical_phase(cfg, adversary, root, tr, rep)
    if m is None:
        return rep, tr

    leak = adversary.leak
    leak_fraction = leak.fraction if leak is not None else cfg.oracle.leak_fraction
    holders = roles.participant_set | {roles.alice}
    key, leaked = acka_generate(holders, L, cfg.k, leak_fraction, root.gen("acka"))
    kappa = np.asarray(key.kappa)
    for a in holders:
        tr.views[a]["K"] = kappa
    tr.adversary["leaked_positions"] = leaked
    tr.adversary["leaked_bits"] = kappa[leaked]
    active = _active_mask(adversary, kappa, leaked)

    if adversary.needs_statevector:
        true, announced, result, triggered, sv, executed = _statevector_rounds(cfg, adversary, root, kappa, active, m, rep)
    else:
        true, announced, result, triggered, sv, executed = _fast_rounds(cfg, adversary, root, kappa, active, m)

    tr.public["SV"] = sv
    tr.public["PP"] = {"announcements": announced, "executed": executed}
    for a in range(1, n + 1):
        tr.views[a]["own_outcomes"] = true[:, a - 1].copy()
    tr.views[roles.alice]["rounds"] = {"kappa": kappa, "true_outcome": true[:, roles.alice - 1].copy(), "result": result}
    tr.adversary["triggered"] = triggered

    if rep.abort_reason is not None:
        return rep, tr
    chi = result[executed & (kappa == 0)]
    gamma = result[executed & (kappa == 1)]
    est = estimate(chi, gamma, L, cfg.delta_threshold, cfg.correct_bias)
    est.m, est.vote_tally, est.sv_rejections = rep.m, rep.vote_tally, rep.sv_rejections
    est.flags = rep.flags + est.flags
    return est, tr
