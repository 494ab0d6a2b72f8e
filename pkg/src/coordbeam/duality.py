"""Approximate uplink-downlink duality under per-BS power constraints.

For fixed beamformers W and a common weighted target gamma, the downlink and
virtual-uplink powers meeting SINR_k = rho_k * gamma with equality are

    p = Lambda 1,   q = Lambda^T 1,   Lambda = (D^-1 - Psi)^-1,

with D = diag(rho_k gamma / f_k^H H_{k,Pi(k)} f_k) and Psi the cross-gain
matrix with zero diagonal. Both have the same 1-norm, but the per-BS split
differs; ``excess_power`` measures how far the downlink split overshoots.
"""

from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import NegativePower, SingularA, SingularMatrix
from .system_model import gain_matrix, per_bs_power

NEGATIVE_ATOL = 1e-9


@dataclass
class CouplingMatrices:
    D: np.ndarray
    Psi: np.ndarray
    A: np.ndarray
    Lambda: np.ndarray


def _weights(ch, rho):
    return np.ones(ch.K) if rho is None else np.broadcast_to(np.asarray(rho, dtype=float), (ch.K,))


def coupling_from_gains(G, gamma, rho):
    """Build the coupling matrices from a precomputed gain matrix."""
    if gamma <= 0:
        raise ValueError("target gamma must be positive")
    K = G.shape[0]
    own = np.diag(G).copy()
    D = np.diag(rho * gamma / own)
    Psi = G.copy()
    np.fill_diagonal(Psi, 0.0)
    A = np.diag(own / (rho * gamma)) - Psi
    try:
        Lam = numerics.linear_solve(A, np.eye(K))
    except SingularMatrix as exc:
        raise SingularA(f"D^-1 - Psi is singular at gamma={gamma:g}") from exc
    return CouplingMatrices(D=D, Psi=Psi, A=A, Lambda=Lam)


def build_coupling(ch, f, gamma, rho=None):
    return coupling_from_gains(gain_matrix(ch, f), gamma, _weights(ch, rho))


def convert_powers(cm):
    """Downlink and virtual-uplink powers (p_tilde, q) from the coupling inverse."""
    Lam = cm.Lambda
    if not np.all(np.isfinite(Lam)):
        raise NegativePower("non-finite coupling inverse")
    ones = np.ones(Lam.shape[0])
    p = Lam @ ones
    q = Lam.T @ ones
    scale = max(np.abs(Lam).max(), 1.0)
    if Lam.min() < -NEGATIVE_ATOL * scale:
        raise NegativePower("coupling inverse has negative entries: target not achievable with these beams")
    return np.maximum(p, 0.0), np.maximum(q, 0.0)


def downlink_power_from_uplink(ch, f, gamma, rho=None):
    """Downlink powers giving every user SINR_k = rho_k * gamma with beams ``f``."""
    p, _ = convert_powers(build_coupling(ch, f, gamma, rho))
    return p


def diag_dominance(ch, f, gamma, rho=None):
    """Column diagonal-dominance ratios of A = D^-1 - Psi.

    eta_k compares the diagonal entry of column k with the sum of the other
    entries of that column; all eta_k > 1 means A is strictly diagonally
    dominant. Interference-free columns give +inf.
    """
    rho = _weights(ch, rho)
    G = gain_matrix(ch, f)
    own = np.diag(G)
    off = G.sum(axis=0) - own
    with np.errstate(divide="ignore"):
        eta = np.where(off > 0, own / (rho * gamma * np.where(off > 0, off, 1.0)), np.inf)
    return eta


def is_dominant(eta):
    return bool(np.all(np.asarray(eta) > 1.0))


def excess_power(p_tilde, ch):
    """Signed overshoot of the most loaded BS: (max_b sum_{k in K_b} p_k - P_BS) / P_BS."""
    loads = per_bs_power(ch, p_tilde) / ch.p_max
    return float(loads.max() - 1.0)
