"""Statistical and exact checks that transcripts and states hide who takes part.

Two role assignments (Alice i with participant vector j, and i' with j') are
comparable for a coalition G of curious agents and a dishonest set D when
neither Alice is in G or D, both vectors agree on G and on D, and both have the
same weight.  The coalition's registers should then have the same distribution
under both assignments.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .adversary import AttackSpec
from .engine import OracleSettings, ProtocolConfig, Transcript, canonical_bytes, run_appe
from .errors import InvalidArgumentError
from .quantum import (
    EXACT_TOL,
    DensityMatrix,
    PureState,
    _walsh,
    apply_local_phase,
    make_ghz,
    phase_ghz,
    project_x_outcomes,
    trace_distance,
    x_outcome_probabilities,
)
from .rng import Streams
from .subprotocols import RoleAssignment

EXACT_CATEGORY_LIMIT = 256
HASH_BUCKETS = 128


# -- assignment validity ----------------------------------------------------


def assignment_violations(n: int, first, second, G: Iterable[int], D: Iterable[int]) -> list[str]:
    """Names of the violated comparability clauses (empty when the pair is valid).

    ``first`` and ``second`` are ``(alice, participants)`` with participants a
    set of agents.
    """
    (i, j), (i2, j2) = first, second
    G, D = set(G), set(D)
    j, j2 = set(j), set(j2)
    for agent in {i, i2} | G | D | j | j2:
        if not 1 <= agent <= n:
            raise InvalidArgumentError(f"agent {agent} out of range 1..{n}")
    out = []
    if i in G | D or i2 in G | D:
        out.append("alice-in-coalition")
    if j & D != j2 & D:
        out.append("participants-differ-on-D")
    if j & G != j2 & G:
        out.append("participants-differ-on-G")
    if len(j) != len(j2):
        out.append("participant-count-differs")
    return out


@dataclass(frozen=True)
class AnonymityTestConfig:
    n: int
    first: tuple  # (alice, participants)
    second: tuple
    G: frozenset
    D: frozenset
    samples: int = 1000  # protocol runs per assignment
    significance: float = 0.001

    def __post_init__(self):
        first = (int(self.first[0]), frozenset(self.first[1]))
        second = (int(self.second[0]), frozenset(self.second[1]))
        object.__setattr__(self, "first", first)
        object.__setattr__(self, "second", second)
        object.__setattr__(self, "G", frozenset(self.G))
        object.__setattr__(self, "D", frozenset(self.D))
        bad = assignment_violations(self.n, first, second, self.G, self.D)
        if bad:
            raise InvalidArgumentError(f"assignment pair violates: {', '.join(bad)}")
        if self.samples < 1:
            raise InvalidArgumentError("samples must be >= 1")
        if not 0.0 < self.significance < 1.0:
            raise InvalidArgumentError("significance must lie in (0, 1)")

    @property
    def coalition(self) -> tuple:
        return tuple(sorted(self.G | self.D))


# -- exact quantum checks ---------------------------------------------------


def uniform_marginal_check(
    n: int, subset: Iterable[int], phase: float, samples: int, rng
) -> tuple[float, float | None]:
    """Max deviation of X-outcome frequencies on ``subset`` from uniform.

    Returns ``(empirical, exact)``; ``exact`` comes from the statevector for
    n <= 6 and is None above.
    """
    agents = sorted(set(subset))
    if not agents or len(agents) >= n:
        raise InvalidArgumentError("subset must be a non-empty proper subset")
    k = len(agents)
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    state = phase_ghz(n, phase)
    probs = x_outcome_probabilities(state, agents)
    exact = float(np.max(np.abs(probs - 2.0**-k))) if n <= 6 else None
    counts = rng.multinomial(samples, probs / probs.sum())
    empirical = float(np.max(np.abs(counts / samples - 2.0**-k)))
    return empirical, exact


def dishonest_conditional_state(
    theta_bar: float, honest_outcomes: Sequence[int], D: Iterable[int], n: int | None = None
) -> PureState:
    """State of D after the honest agents obtained ``honest_outcomes`` in the X basis.

    The projection of the phase-encoded GHZ is checked against the closed form
    with X-basis amplitudes proportional to 1 + (-1)^{|o_H| + |o_D|} e^{i theta}.
    """
    D = sorted(set(D))
    if not D:
        raise InvalidArgumentError("the dishonest set must be non-empty")
    n = n if n is not None else len(D) + len(honest_outcomes)
    honest = [a for a in range(1, n + 1) if a not in D]
    if len(honest) != len(honest_outcomes):
        raise InvalidArgumentError("one outcome per honest agent is required")
    projected = project_x_outcomes(phase_ghz(n, theta_bar), honest, honest_outcomes)
    return _check_closed_form(projected, theta_bar, honest_outcomes)


def conditional_state_from_roles(
    thetas: Sequence[float], participants: Iterable[int], honest_outcomes: Sequence[int], D: Iterable[int]
) -> PureState:
    """Same residual, built from the per-agent encoding of a concrete role assignment."""
    n = len(thetas)
    members = set(participants)
    m = len(members)
    D = sorted(set(D))
    state = make_ghz(n)
    for a in range(1, n + 1):
        if a in members:
            state = apply_local_phase(state, a, float(thetas[a - 1]), m)
    honest = [a for a in range(1, n + 1) if a not in D]
    return project_x_outcomes(state, honest, honest_outcomes)


def _check_closed_form(state: PureState, theta: float, honest_outcomes) -> PureState:
    k = state.n
    h_par = sum(int(b) for b in honest_outcomes) % 2
    idx = np.arange(2**k)
    d_par = np.array([bin(i).count("1") % 2 for i in idx])
    sign = np.where((d_par + h_par) % 2 == 0, 1.0, -1.0)
    x_amps = 1.0 + sign * np.exp(1j * theta)
    comp = _walsh(k) @ x_amps  # Walsh matrix is its own inverse
    norm = np.linalg.norm(comp)
    if norm < EXACT_TOL:
        raise ArithmeticError("closed-form residual has zero norm")
    closed = comp / norm
    # both are normalised; compare up to global phase
    overlap = np.vdot(closed, state.amplitudes)
    aligned = state.amplitudes * (abs(overlap) / overlap) if abs(overlap) > 0 else state.amplitudes
    if not np.allclose(aligned, closed, atol=1e-10, rtol=0):
        raise ArithmeticError("projected residual disagrees with the closed form")
    return PureState(k, closed)


def distribution_trace_distance(p: Sequence[float], q: Sequence[float]) -> float:
    """Trace distance of two classical distributions embedded as diagonal states."""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise InvalidArgumentError("distributions must have the same support")
    # zero-pad to a qubit dimension; empty outcomes do not change the distance
    dim = 1 << max(1, (p.size - 1).bit_length())
    p, q = np.pad(p, (0, dim - p.size)), np.pad(q, (0, dim - q.size))
    return trace_distance(DensityMatrix.diagonal(p), DensityMatrix.diagonal(q))


# -- transcript indistinguishability ---------------------------------------


def transcript_sections(tr: Transcript, coalition: Sequence[int]) -> dict:
    """Registers of a coalition, split into independently tested sections."""
    out = {}
    for a in coalition:
        for name, reg in tr.views[a].items():
            out[f"view{a}:{name}"] = reg
    out["public:NV"] = tr.public.get("NV")
    out["public:SV"] = tr.public.get("SV")
    pp = tr.public.get("PP")
    if pp is not None:
        for j in range(tr.L):
            out[f"public:PP:{j}"] = (pp["announcements"][j], pp["executed"][j])
    out["E"] = tr.adversary
    return out


def _categorical(samples: list[bytes]) -> list:
    if len(set(samples)) <= EXACT_CATEGORY_LIMIT:
        return samples
    return [int.from_bytes(hashlib.sha256(s).digest()[:8], "big") % HASH_BUCKETS for s in samples]


def chi2_homogeneity(a: Sequence, b: Sequence) -> dict:
    """Chi-square homogeneity of two categorical samples, pooling sparse bins."""
    cats = sorted(set(a) | set(b), key=repr)
    index = {c: t for t, c in enumerate(cats)}
    table = np.zeros((2, len(cats)))
    np.add.at(table[0], [index[x] for x in a], 1)
    np.add.at(table[1], [index[x] for x in b], 1)
    freq = table / table.sum(axis=1, keepdims=True)
    tv = 0.5 * float(np.abs(freq[0] - freq[1]).sum())
    # pool the sparsest columns until every expected count is at least 5
    order = np.argsort(table.sum(axis=0), kind="stable")
    table = table[:, order]
    row_frac = table.sum(axis=1) / table.sum()
    pooled, acc = [], np.zeros(2)
    for col in table.T:
        acc = acc + col
        if np.all(acc.sum() * row_frac >= 5):
            pooled.append(acc)
            acc = np.zeros(2)
    if acc.sum() and pooled:
        pooled[-1] = pooled[-1] + acc
    elif acc.sum():
        pooled.append(acc)
    table = np.array(pooled).T
    if table.shape[1] < 2:
        return {"statistic": 0.0, "dof": 0, "p_value": 1.0, "tv": tv, "bins": int(table.shape[1])}
    stat, p, dof, _ = stats.chi2_contingency(table, correction=False)
    return {"statistic": float(stat), "dof": int(dof), "p_value": float(p), "tv": tv, "bins": int(table.shape[1])}


@dataclass
class IndistinguishabilityReport:
    sections: dict = field(default_factory=dict)
    p_value: float = 1.0  # Bonferroni-combined
    min_section: str | None = None
    statistic: float = 0.0
    dof: int = 0
    tv: float = 0.0
    samples: int = 0
    significance: float = 0.001

    @property
    def rejected(self) -> bool:
        return self.p_value < self.significance

    def to_dict(self) -> dict:
        return {
            "p_value": self.p_value,
            "statistic": self.statistic,
            "dof": self.dof,
            "tv": self.tv,
            "min_section": self.min_section,
            "samples": self.samples,
            "significance": self.significance,
            "rejected": self.rejected,
            "sections": self.sections,
        }


@dataclass(frozen=True)
class AnonymitySettings:
    """Protocol settings shared by both arms of a comparison."""

    thetas: tuple
    L: int = 4
    k: int = 1
    vote_rounds: int = 4
    m_min: int = 1
    mutation: str | None = None
    attack: AttackSpec | None = None


def _arm_config(n: int, alice: int, participants, settings: AnonymitySettings) -> ProtocolConfig:
    return ProtocolConfig(
        RoleAssignment.from_set(n, alice, participants),
        settings.thetas,
        settings.L,
        settings.k,
        delta_threshold=1.0,
        vote_rounds=settings.vote_rounds,
        m_min=settings.m_min,
        oracle=OracleSettings(),
        mutation=settings.mutation,
        enforce_vote=False,
    )


def sample_sections(cfg: AnonymityTestConfig, which: int, settings: AnonymitySettings, seed: int) -> dict:
    """Section name -> list of canonical byte strings over ``cfg.samples`` runs."""
    alice, participants = (cfg.first, cfg.second)[which]
    pcfg = _arm_config(cfg.n, alice, participants, settings)
    attack = settings.attack or AttackSpec(cfg.D)
    root = Streams(seed).fork("anonymity", which)
    out: dict = {}
    for t in range(cfg.samples):
        _, tr = run_appe(pcfg, attack, root.fork(t))
        for name, reg in transcript_sections(tr, cfg.coalition).items():
            out.setdefault(name, []).append(canonical_bytes(reg))
    return out


def transcript_indistinguishability(
    cfg: AnonymityTestConfig, settings: AnonymitySettings, seed: int = 0
) -> IndistinguishabilityReport:
    arms = [sample_sections(cfg, w, settings, seed) for w in (0, 1)]
    names = sorted(set(arms[0]) | set(arms[1]))
    rep = IndistinguishabilityReport(samples=cfg.samples, significance=cfg.significance)
    for name in names:
        a, b = arms[0].get(name, []), arms[1].get(name, [])
        both = _categorical(a + b)
        rep.sections[name] = chi2_homogeneity(both[: len(a)], both[len(a) :])
    worst = min(rep.sections, key=lambda s: rep.sections[s]["p_value"])
    w = rep.sections[worst]
    rep.min_section = worst
    rep.p_value = min(1.0, len(rep.sections) * w["p_value"])
    rep.statistic, rep.dof = w["statistic"], w["dof"]
    rep.tv = max(s["tv"] for s in rep.sections.values())
    return rep


# -- ideal-output consequences ----------------------------------------------


def ideal_output_check(cfg: ProtocolConfig, swap: RoleAssignment | None = None, rounds: int | None = None) -> dict:
    """Uniformity and independence of public announcements in an honest run.

    With ``swap`` the same seed is re-run under another role assignment and the
    SV records are compared for equality.
    """
    if cfg.oracle.sv_epsilon != 0.0:
        raise InvalidArgumentError("the ideal-output check needs an exact verifier (sv_epsilon = 0)")
    rep, tr = run_appe(cfg)
    ann = tr.public["PP"]["announcements"][tr.public["PP"]["executed"]].astype(float)
    L, n = ann.shape
    sigma = 0.5 / np.sqrt(L)
    freq = ann.mean(axis=0)
    corr = np.corrcoef(ann.T)
    off = corr[~np.eye(n, dtype=bool)]
    out = {
        "rounds": int(L),
        "frequencies": freq.tolist(),
        "max_frequency_deviation": float(np.max(np.abs(freq - 0.5))),
        "frequency_bound": 4 * sigma,
        "max_abs_correlation": float(np.max(np.abs(off))),
        "correlation_bound": 4.0 / np.sqrt(L),
    }
    out["uniform"] = out["max_frequency_deviation"] <= out["frequency_bound"]
    out["independent"] = out["max_abs_correlation"] <= out["correlation_bound"]
    if swap is not None:
        other = ProtocolConfig(**{**cfg.__dict__, "roles": swap})
        _, tr2 = run_appe(other)
        out["sv_identical_under_swap"] = canonical_bytes(tr.public["SV"]) == canonical_bytes(tr2.public["SV"])
    return out
