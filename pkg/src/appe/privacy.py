"""Quantum Fisher information of the phase-encoded GHZ family.

Privacy of individual parameters shows up as a rank-1 QFI matrix proportional
to w w^T, with w = (1/m, ..., 1/m), and as equal parameter derivatives of the
encoded state.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError
from .quantum import PureState, apply_local_phase, make_ghz

FD_STEP = 1e-5
SUPPORT_TOL = 1e-12
H_NORM = 0.5  # operator norm of the local generator sigma_z / 2


def _divisors(n: int, m: int, divisors: Sequence[int] | None) -> np.ndarray:
    if m < 1:
        raise InvalidArgumentError("m must be >= 1")
    d = np.full(n, float(m)) if divisors is None else np.asarray(divisors, dtype=float)
    if d.shape != (n,) or np.any(d == 0):
        raise InvalidArgumentError("one non-zero divisor per agent is required")
    return d


def encoded_family(theta: Sequence[float], m: int, divisors: Sequence[int] | None = None) -> PureState:
    """GHZ after every agent applies diag(1, e^{i theta_a / d_a}); d_a = m unless overridden."""
    theta = np.asarray(theta, dtype=float)
    n = theta.size
    d = _divisors(n, m, divisors)
    state = make_ghz(n)
    for a in range(n):
        # apply_local_phase divides by its integer argument, so pass theta/d with divisor 1
        state = apply_local_phase(state, a + 1, float(theta[a] / d[a]), 1)
    return state


def _number_ops(n: int) -> np.ndarray:
    """Row a: diagonal of |1><1| on agent a+1 in the computational basis."""
    idx = np.arange(2**n)
    return np.stack([(idx >> (n - 1 - a)) & 1 for a in range(n)]).astype(float)


def _analytic_derivatives(theta, m, divisors) -> tuple[np.ndarray, np.ndarray]:
    psi = encoded_family(theta, m, divisors).amplitudes
    n = len(theta)
    d = _divisors(n, m, divisors)
    dpsi = 1j * (_number_ops(n) / d[:, None]) * psi[None, :]
    return psi, dpsi


def _gauge_fixed(theta, m, divisors) -> np.ndarray:
    psi = encoded_family(theta, m, divisors).amplitudes
    a0 = psi[0]
    return psi * (abs(a0) / a0) if abs(a0) > SUPPORT_TOL else psi


def _fd_derivatives(theta, m, divisors, h=FD_STEP) -> tuple[np.ndarray, np.ndarray]:
    theta = np.asarray(theta, dtype=float)
    psi = _gauge_fixed(theta, m, divisors)
    rows = []
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        rows.append((_gauge_fixed(theta + e, m, divisors) - _gauge_fixed(theta - e, m, divisors)) / (2 * h))
    return psi, np.stack(rows)


def _pure_qfi(psi: np.ndarray, dpsi: np.ndarray) -> np.ndarray:
    overlap = dpsi.conj() @ dpsi.T  # <d_i psi | d_j psi>
    berry = dpsi.conj() @ psi  # <d_i psi | psi>
    return 4.0 * np.real(overlap - np.outer(berry, berry.conj()))


def sld_solve(rho: np.ndarray, drho: np.ndarray) -> tuple[np.ndarray, bool]:
    """SLD in the eigenbasis of rho; returns ``(L, flagged)``.

    Entries with eigenvalue sum below 1e-12 are set to zero; ``flagged`` marks
    a derivative with weight there, where the equation has no solution.
    """
    rho = np.asarray(getattr(rho, "entries", rho), dtype=complex)
    drho = np.asarray(drho, dtype=complex)
    if rho.shape != drho.shape or rho.shape[0] != rho.shape[1]:
        raise InvalidArgumentError("rho and drho must be square matrices of equal size")
    lam, v = np.linalg.eigh(rho)
    dv = v.conj().T @ drho @ v
    denom = lam[:, None] + lam[None, :]
    outside = denom < SUPPORT_TOL
    flagged = bool(np.any(np.abs(dv[outside]) > 1e-10))
    safe = np.where(outside, 1.0, denom)
    l_eig = np.where(outside, 0.0, 2.0 * dv / safe)
    return v @ l_eig @ v.conj().T, flagged


def _sld_qfi(psi: np.ndarray, dpsi: np.ndarray) -> np.ndarray:
    rho = np.outer(psi, psi.conj())
    slds = []
    for row in dpsi:
        drho = np.outer(row, psi.conj()) + np.outer(psi, row.conj())
        slds.append(sld_solve(rho, drho)[0])
    n = len(slds)
    q = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            q[i, j] = 0.5 * np.trace(rho @ (slds[i] @ slds[j] + slds[j] @ slds[i])).real
    return q


@dataclass(frozen=True)
class QfiMatrix:
    entries: np.ndarray
    method: str

    def __post_init__(self):
        q = np.asarray(self.entries, dtype=float)
        if not np.allclose(q, q.T, atol=1e-9, rtol=0):
            raise InvalidArgumentError("QFI matrix is not symmetric")
        if q.size and np.linalg.eigvalsh(q).min() < -1e-9:
            raise InvalidArgumentError("QFI matrix is not positive semidefinite")
        q = q.copy()
        q.setflags(write=False)
        object.__setattr__(self, "entries", q)

    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.entries, compute_uv=False)


QFI_METHODS = ("analytic", "finite-difference", "sld")


def qfi_matrix(theta: Sequence[float], m: int, method: str = "analytic", divisors=None) -> QfiMatrix:
    if method == "analytic":
        psi, dpsi = _analytic_derivatives(theta, m, divisors)
        q = _pure_qfi(psi, dpsi)
    elif method == "finite-difference":
        psi, dpsi = _fd_derivatives(theta, m, divisors)
        q = _pure_qfi(psi, dpsi)
    elif method == "sld":
        psi, dpsi = _analytic_derivatives(theta, m, divisors)
        q = _sld_qfi(psi, dpsi)
    else:
        raise InvalidArgumentError(f"unknown QFI method {method!r}; known: {QFI_METHODS}")
    return QfiMatrix(0.5 * (q + q.T), method)


def _drho_fd(theta, m, divisors, h=FD_STEP) -> list[np.ndarray]:
    theta = np.asarray(theta, dtype=float)
    out = []
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        plus = encoded_family(theta + e, m, divisors).amplitudes
        minus = encoded_family(theta - e, m, divisors).amplitudes
        out.append((np.outer(plus, plus.conj()) - np.outer(minus, minus.conj())) / (2 * h))
    return out


def trace_norm(a: np.ndarray) -> float:
    return float(np.abs(np.linalg.eigvalsh(a)).sum())


@dataclass(frozen=True)
class PrivacyReport:
    derivative_gap: float  # max_ij ||d_i rho - d_j rho||_tr
    second_singular_value: float
    rank_one_deviation: float  # max |Q - Q_11 m^2 w w^T|

    def passes(self, tol: float = 1e-6) -> bool:
        return max(self.derivative_gap, self.second_singular_value, self.rank_one_deviation) <= tol

    def as_dict(self) -> dict:
        return {
            "derivative_gap": self.derivative_gap,
            "second_singular_value": self.second_singular_value,
            "rank_one_deviation": self.rank_one_deviation,
        }


def check_privacy_conditions(theta: Sequence[float], m: int, divisors=None) -> PrivacyReport:
    theta = np.asarray(theta, dtype=float)
    n = theta.size
    drho = _drho_fd(theta, m, divisors)
    gap = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            gap = max(gap, trace_norm(drho[i] - drho[j]))
    q = qfi_matrix(theta, m, "analytic", divisors).entries
    sv = np.linalg.svd(q, compute_uv=False)
    second = float(sv[1]) if sv.size > 1 else 0.0
    w = np.full(n, 1.0 / m)
    target = q[0, 0] * m**2 * np.outer(w, w)
    return PrivacyReport(gap, second, float(np.max(np.abs(q - target))))


def reparametrization(w: Sequence[float]) -> np.ndarray:
    """Orthogonal B whose first column is w / |w|, completed by Gram-Schmidt on e_1..e_n."""
    w = np.asarray(w, dtype=float)
    n = w.size
    cols = [w / np.linalg.norm(w)]
    for e in np.eye(n):
        v = e - sum(np.dot(e, c) * c for c in cols)
        norm = np.linalg.norm(v)
        if norm > 1e-9 and len(cols) < n:
            cols.append(v / norm)
    return np.stack(cols, axis=1)


def reparametrized_qfi(q: np.ndarray, w: Sequence[float]) -> np.ndarray:
    b = reparametrization(w)
    return b.T @ np.asarray(q) @ b


def privacy_epsilon(eps_sv: float) -> float:
    """Leakage bound for the mean with a sigma_z / 2 generator: 4 * 1/2 * eps_sv."""
    return privacy_epsilon_general(eps_sv, H_NORM)


def privacy_epsilon_general(eps_sv: float, h_norm: float) -> float:
    if not 0.0 <= eps_sv <= 1.0:
        raise InvalidArgumentError("eps_sv must lie in [0, 1]")
    if h_norm < 0:
        raise InvalidArgumentError("generator norm must be non-negative")
    return 4.0 * h_norm * eps_sv
