"""Estimators and closed-form integrity bounds.

β is the probability of an even PE parity, β' the same under an announcement
flip of probability α, and δ the observed fraction of failed PV rounds.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError, SingularityError, UncorrectableError

log = logging.getLogger(__name__)

DEFAULT_ETA_GRID = tuple(float(x) for x in np.round(np.linspace(0.0, 0.5, 11), 10))


def _clamp01(x: float) -> tuple[float, float]:
    """Clamped value and the amount removed."""
    c = min(1.0, max(0.0, float(x)))
    return c, float(x) - c


def theta_from_beta(beta: float) -> float:
    b, excess = _clamp01(beta)
    if excess:
        log.info("beta %.6g clamped to [0, 1] by %.3g", beta, excess)
    return float(math.acos(2.0 * b - 1.0))


def perturbed_beta(beta: float, alpha: float) -> float:
    """Even-parity probability after a flip with probability alpha."""
    return beta + alpha - 2.0 * alpha * beta


def alpha_from_eta(theta: float, eta: float) -> float:
    """Flip rate that shifts the estimate from theta to theta + eta."""
    c = math.cos(theta)
    if abs(c) < 1e-9:
        raise SingularityError(f"cos(theta) vanishes at theta={theta}")
    return abs(math.sin(theta + eta / 2.0) * math.sin(eta / 2.0) / c)


def f_poly(eta: float, theta: float) -> float:
    return 0.5 * abs(theta + theta**3 / 3.0 + 2.0 * theta**5 / 15.0) * abs(eta / 2.0)


def lemma_tail_bound(omega: float, L: int, k: int) -> float:
    """Tail bound for the PE/PV failure-rate gap under a uniform k-subset of L positions."""
    if not 0 < k < L:
        raise InvalidArgumentError(f"need 0 < k < L, got k={k}, L={L}")
    if omega <= 0:
        return 1.0
    val = math.exp(-2.0 * omega**2 * (L - k) * k**2 / (L * (k + 1)))
    return min(1.0, max(0.0, val))


def bias_bound(eta: float, theta: float, delta: float, L: int, k: int) -> float:
    """Probability that an attack shifts the estimate by eta while only delta PV rounds fail."""
    if not 0 < k < L:
        raise InvalidArgumentError(f"need 0 < k < L, got k={k}, L={L}")
    f = f_poly(eta, theta)
    if f <= delta:
        return 1.0
    return lemma_tail_bound(f - delta, L, k)


def correct_beta(beta_prime: float, delta: float) -> tuple[float, bool]:
    """Undo a known flip rate; returns ``(beta, clamped)``."""
    if delta >= 0.5 - 1e-9:
        raise UncorrectableError(f"flip rate {delta} >= 1/2 cannot be inverted")
    raw = (beta_prime - delta) / (1.0 - 2.0 * delta)
    b, excess = _clamp01(raw)
    # rounding at the endpoints is not a real clamp
    return b, abs(excess) > 1e-12


def variance_check(theta_samples: Sequence[float], nu: int | None = None) -> tuple[float, float | None]:
    x = np.asarray(theta_samples, dtype=float)
    if x.size < 2:
        raise InvalidArgumentError("variance needs at least 2 samples")
    predicted = 1.0 / nu if nu else None
    return float(np.var(x, ddof=1)), predicted


@dataclass
class EstimationReport:
    beta_hat: float | None = None
    delta_hat: float = 0.0
    theta_hat: float | None = None
    variance_pred: float | None = None
    nu: int = 0
    k: int = 0
    ci_halfwidth: float | None = None
    bias_bound_curve: list = field(default_factory=list)
    corrected_beta: float | None = None
    corrected_theta: float | None = None
    beta_used: float | None = None
    m: int | None = None
    vote_tally: list | None = None
    sv_rejections: int = 0
    flags: list = field(default_factory=list)
    abort_reason: str | None = None
    abort_detail: str = ""

    @property
    def aborted(self) -> bool:
        return self.abort_reason is not None

    def to_dict(self) -> dict:
        return asdict(self)


def estimate(
    chi: np.ndarray,
    gamma: np.ndarray,
    L: int,
    delta_threshold: float = 0.5,
    correct: bool = False,
    eta_grid: Sequence[float] = DEFAULT_ETA_GRID,
) -> EstimationReport:
    """θ̂ from the PE results ``chi`` and δ̂ from the PV results ``gamma``."""
    chi = np.asarray(chi, dtype=np.uint8)
    gamma = np.asarray(gamma, dtype=np.uint8)
    nu, k = int(chi.size), int(gamma.size)
    rep = EstimationReport(nu=nu, k=k)
    rep.delta_hat = float(gamma.mean()) if k else 0.0
    if nu == 0:
        rep.flags.append("no-pe-rounds")
        return rep
    rep.beta_hat = float(np.mean(chi == 0))
    rep.variance_pred = 1.0 / nu
    rep.ci_halfwidth = 4.0 / math.sqrt(nu)
    beta = rep.beta_hat
    if correct and k:
        try:
            rep.corrected_beta, clamped = correct_beta(rep.beta_hat, rep.delta_hat)
            rep.corrected_theta = theta_from_beta(rep.corrected_beta)
            beta = rep.corrected_beta
            if clamped:
                rep.flags.append("corrected-beta-clamped")
        except UncorrectableError:
            rep.flags.append("uncorrectable")
    rep.beta_used = beta
    rep.theta_hat = theta_from_beta(beta)
    if 0 < k < L:
        rep.bias_bound_curve = [
            [float(eta), bias_bound(eta, rep.theta_hat, rep.delta_hat, L, k)] for eta in eta_grid
        ]
    else:
        rep.flags.append("bias-bound-undefined")
    if rep.delta_hat > delta_threshold:
        rep.abort_reason = "delta-threshold"
        rep.abort_detail = f"delta_hat={rep.delta_hat:.6f} exceeds threshold {delta_threshold}"
    return rep
