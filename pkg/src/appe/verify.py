"""Invariant suites run by ``appe verify``.

Each check returns ``(passed, detail)``.  Checks that run the protocol take the
build mutation so that a deliberately broken variant can be shown to fail.
"""
from __future__ import annotations

import itertools
import math
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from . import anonymity, estimation, oracles, privacy, quantum, subprotocols
from .adversary import AnnounceFlip, AttackSpec
from .engine import ProtocolConfig, run_appe
from .subprotocols import RoleAssignment

SUITES = ("core", "subprotocols", "integrity", "privacy", "anonymity")
EXAMPLE_THETAS = (0.2, 0.5, 0.9, 1.4, 0.7, 2.0)


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str
    seconds: float


# -- core -------------------------------------------------------------------


def check_parity_law(mutation=None, samples=100_000):
    rng = np.random.default_rng(11)
    worst = 0.0
    for theta in (0.0, math.pi / 4, math.pi / 2, 2 * math.pi / 3, math.pi):
        out = quantum.sample_ghz_phase_fastpath(6, theta, rng, size=samples)
        p = (1 + math.cos(theta)) / 2
        emp = float(np.mean(out.sum(axis=1) % 2 == 0))
        tol = 4 * math.sqrt(p * (1 - p) / samples)
        if abs(emp - p) > tol + 1e-15:
            return False, f"theta={theta:.4f}: Pr(even)={emp:.5f}, expected {p:.5f}"
        worst = max(worst, abs(emp - p))
    return True, f"max deviation {worst:.2e}"


def check_marginal_uniformity(mutation=None):
    worst = 0.0
    for n in range(2, 7):
        state = quantum.phase_ghz(n, 0.7)
        for r in range(1, n):
            for sub in itertools.combinations(range(1, n + 1), r):
                probs = quantum.x_outcome_probabilities(state, sub)
                worst = max(worst, float(np.max(np.abs(probs - 2.0**-r))))
    return worst <= 1e-12, f"max deviation {worst:.1e}"


def check_fastpath_equivalence(mutation=None, samples=20_000):
    rng = np.random.default_rng(5)
    n, phase = 4, math.pi / 2
    probs = quantum.x_outcome_probabilities(quantum.phase_ghz(n, phase), range(1, n + 1))
    out = quantum.sample_ghz_phase_fastpath(n, phase, rng, size=samples)
    idx = out @ (1 << np.arange(n - 1, -1, -1))
    counts = np.bincount(idx, minlength=2**n)
    p = stats.chisquare(counts, probs * samples).pvalue
    return p > 0.001, f"chi-square p={p:.3g}"


# -- sub-protocols ----------------------------------------------------------


def check_notification(mutation=None, max_n=4):
    rng = np.random.default_rng(1)
    for n in range(1, max_n + 1):
        for alice in range(1, n + 1):
            for j in itertools.product((0, 1), repeat=n):
                if not any(j):
                    continue
                res = subprotocols.notification(RoleAssignment(n, alice, j), rng)
                if res.z != j:
                    return False, f"n={n} alice={alice} j={j} -> z={res.z}"
    return True, f"all assignments n<={max_n}"


def check_parity(mutation=None, max_n=5):
    rng = np.random.default_rng(2)
    for n in range(1, max_n + 1):
        for x in itertools.product((0, 1), repeat=n):
            if subprotocols.parity_protocol(x, rng).y != sum(x) % 2:
                return False, f"inputs {x}"
    return True, f"all inputs n<={max_n}"


def check_vote(mutation=None, runs=5):
    n = 6
    s = subprotocols.vote_rounds_for(n)
    ok = 0
    for seed in range(runs):
        rng = np.random.default_rng(seed)
        choices = rng.integers(0, 2, size=n)
        res = subprotocols.vote(choices, s, rng)
        ok += res.ok and res.tally == (n - int(choices.sum()), int(choices.sum()))
    return ok == runs, f"{ok}/{runs} correct tallies at s={s}"


# -- integrity --------------------------------------------------------------


def _example(mutation, L, k, seed, thetas=None):
    theta = math.pi / 3
    roles = RoleAssignment.from_set(6, 3, {2, 3, 4, 6})
    thetas = thetas or tuple(theta if roles.is_participant(a) else 0.0 for a in range(1, 7))
    return ProtocolConfig(roles, thetas, L, k, seed=seed, mutation=mutation, delta_threshold=1.0)


def check_pv_soundness(mutation=None):
    rep, _ = run_appe(_example(mutation, 20_000, 10_000, 3))
    return rep.delta_hat == 0.0, f"delta_hat={rep.delta_hat}"


def check_flip_detection(mutation=None):
    alpha = 0.05
    rep, _ = run_appe(_example(mutation, 100_000, 50_000, 4), AttackSpec(frozenset({5}), (AnnounceFlip(alpha),)))
    tol = 4 * math.sqrt(alpha * (1 - alpha) / 50_000)
    return abs(rep.delta_hat - alpha) <= tol, f"delta_hat={rep.delta_hat:.4f}, alpha={alpha}"


def check_round_trip(mutation=None):
    worst = 0.0
    for b in np.linspace(0, 1, 11):
        for d in np.linspace(0, 0.45, 10):
            back, _ = estimation.correct_beta(estimation.perturbed_beta(b, d), d)
            worst = max(worst, abs(back - b))
    return worst <= 1e-12, f"max error {worst:.1e}"


def check_lemma(mutation=None, trials=10_000):
    rng = np.random.default_rng(7)
    L, k, omega, q = 200, 100, 0.1, 0.1
    bound = estimation.lemma_tail_bound(omega, L, k)
    z = rng.random((trials, L)) < q
    perm = np.argsort(rng.random((trials, L)), axis=1)
    keys = np.zeros((trials, L), dtype=bool)
    np.put_along_axis(keys, perm[:, :k], True, axis=1)
    in_v = (z & keys).sum(axis=1) / k
    out_v = (z & ~keys).sum(axis=1) / (L - k)
    freq = float(np.mean((in_v <= q) & (out_v >= q + omega)))
    sigma = math.sqrt(max(bound * (1 - bound), 1e-12) / trials)
    return freq <= bound + 4 * sigma, f"frequency {freq:.4f} vs bound {bound:.4f}"


# -- privacy ----------------------------------------------------------------


def check_qfi(mutation=None):
    rng = np.random.default_rng(3)
    worst = {"analytic": 0.0, "fd": 0.0, "sv2": 0.0, "gap": 0.0}
    for m in range(2, 7):
        theta = rng.uniform(-math.pi, math.pi, m)
        q = privacy.qfi_matrix(theta, m).entries
        worst["analytic"] = max(worst["analytic"], float(np.max(np.abs(q - np.ones((m, m)) / m**2))))
        fd = privacy.qfi_matrix(theta, m, "finite-difference").entries
        worst["fd"] = max(worst["fd"], float(np.max(np.abs(fd - q))))
        rep = privacy.check_privacy_conditions(theta, m)
        worst["sv2"] = max(worst["sv2"], rep.second_singular_value)
        worst["gap"] = max(worst["gap"], rep.derivative_gap)
    ok = worst["analytic"] <= 1e-9 and worst["fd"] <= 1e-6 and worst["sv2"] <= 1e-6 and worst["gap"] <= 1e-6
    return ok, ", ".join(f"{k}={v:.1e}" for k, v in worst.items())


def check_broken_encoding(mutation=None):
    rep = privacy.check_privacy_conditions([0.1, 0.7, 1.3], 3, divisors=[3, 3, 2])
    return rep.derivative_gap > 0.01, f"derivative gap {rep.derivative_gap:.3f} for unequal divisors"


def check_privacy_epsilon(mutation=None):
    ok = privacy.privacy_epsilon(0.01) == 0.02 and privacy.privacy_epsilon(0.0) == 0.0
    return ok, "eps_priv = 2 eps_sv"


# -- anonymity --------------------------------------------------------------


def check_reduced_states(mutation=None, max_n=6):
    worst = 0.0
    for n in range(2, max_n + 1):
        for theta in np.linspace(0, 2 * math.pi, 10, endpoint=False):
            state = quantum.phase_ghz(n, theta)
            for r in range(1, n):
                for sub in itertools.combinations(range(1, n + 1), r):
                    rho = quantum.reduced_density(state, sub).entries
                    ref = np.zeros_like(rho)
                    ref[0, 0] = ref[-1, -1] = 0.5
                    worst = max(worst, float(0.5 * np.abs(np.linalg.eigvalsh(rho - ref)).sum()))
    return worst <= 1e-12, f"max trace distance {worst:.1e}"


def check_conditional_state(mutation=None):
    n, D, theta = 5, (4, 5), math.pi / 3
    ref = anonymity.dishonest_conditional_state(theta, (0, 0, 0), D)
    for j in itertools.combinations(range(1, n + 1), 3):
        thetas = [theta if a in j else 0.0 for a in range(1, n + 1)]
        for o in itertools.product((0, 1), repeat=3):
            if sum(o) % 2:
                continue
            st = anonymity.conditional_state_from_roles(thetas, j, o, D)
            if abs(abs(np.vdot(ref.amplitudes, st.amplitudes)) - 1) > 1e-10:
                return False, f"participants {j}, outcomes {o}"
    return True, "identical for every participant vector and even honest outcome"


def _indistinguishability(mutation, first, second, samples):
    cfg = anonymity.AnonymityTestConfig(6, first, second, {1}, {5}, samples=samples)
    rep = anonymity.transcript_indistinguishability(cfg, anonymity.AnonymitySettings(EXAMPLE_THETAS, mutation=mutation), seed=21)
    return not rep.rejected, f"p={rep.p_value:.3g} (worst section {rep.min_section}), TV={rep.tv:.3f}"


def check_transcripts_same_participants(mutation=None, samples=1000):
    return _indistinguishability(mutation, (3, {2, 3, 4, 6}), (4, {2, 3, 4, 6}), samples)


def check_transcripts_other_participants(mutation=None, samples=1000):
    return _indistinguishability(mutation, (3, {1, 2, 3, 4}), (4, {1, 3, 4, 6}), samples)


def check_ideal_output(mutation=None):
    cfg = _example(mutation, 20_000, 10_000, 8)
    swap = RoleAssignment.from_set(6, 1, {1, 2, 5, 6})
    rep = anonymity.ideal_output_check(cfg, swap)
    ok = rep["uniform"] and rep["independent"] and rep["sv_identical_under_swap"]
    return ok, f"max freq dev {rep['max_frequency_deviation']:.4f}, max corr {rep['max_abs_correlation']:.4f}"


REGISTRY: dict[str, list[tuple[str, Callable]]] = {
    "core": [
        ("parity-law", check_parity_law),
        ("marginal-uniformity", check_marginal_uniformity),
        ("fastpath-equivalence", check_fastpath_equivalence),
    ],
    "subprotocols": [
        ("notification-exhaustive", check_notification),
        ("parity-exhaustive", check_parity),
        ("vote-tally", check_vote),
    ],
    "integrity": [
        ("pv-soundness", check_pv_soundness),
        ("flip-detection", check_flip_detection),
        ("correction-round-trip", check_round_trip),
        ("tail-bound-empirical", check_lemma),
    ],
    "privacy": [
        ("qfi-rank-one", check_qfi),
        ("broken-encoding-detected", check_broken_encoding),
        ("privacy-epsilon", check_privacy_epsilon),
    ],
    "anonymity": [
        ("reduced-states", check_reduced_states),
        ("conditional-state", check_conditional_state),
        ("transcripts-same-participants", check_transcripts_same_participants),
        ("transcripts-other-participants", check_transcripts_other_participants),
        ("ideal-output", check_ideal_output),
    ],
}


def run_suites(suites, mutation=None, echo=print) -> list[CheckResult]:
    results = []
    for suite in suites:
        for name, fn in REGISTRY[suite]:
            t0 = time.perf_counter()
            try:
                passed, detail = fn(mutation=mutation)
            except Exception as exc:  # a crashing check is a failing check
                passed, detail = False, f"{type(exc).__name__}: {exc}"
            res = CheckResult(suite, name, bool(passed), detail, time.perf_counter() - t0)
            results.append(res)
            if echo:
                echo(f"{'PASS' if res.passed else 'FAIL'} {suite}/{name}: {detail}")
    return results


def junit_xml(results: list[CheckResult]) -> bytes:
    root = ET.Element("testsuites")
    for suite in dict.fromkeys(r.suite for r in results):
        rs = [r for r in results if r.suite == suite]
        el = ET.SubElement(
            root,
            "testsuite",
            name=suite,
            tests=str(len(rs)),
            failures=str(sum(not r.passed for r in rs)),
        )
        for r in rs:
            case = ET.SubElement(el, "testcase", classname=f"appe.verify.{suite}", name=r.name, time=f"{r.seconds:.3f}")
            if not r.passed:
                ET.SubElement(case, "failure", message=r.detail)
            else:
                ET.SubElement(case, "system-out").text = r.detail
    return ET.tostring(root, encoding="utf-8", xml_declaration=True)
