"""Problem instance and its performance functionals.

Noise is folded into the channel covariances, H_ki = h_ki h_ki^H / sigma_k^2,
so both SINR denominators carry a dimensionless "+1" and powers are linear
watts relative to unit normalized noise.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NegativeSinr, ShapeMismatch


@dataclass
class ChannelSet:
    """All channels of one coordinated cluster.

    h[k, b] is the M-vector from BS b to user k, ``noise[k]`` is sigma_k^2,
    ``serving[k]`` the index of the BS serving user k and ``p_max[b]`` the
    per-BS power limit.
    """

    h: np.ndarray
    noise: np.ndarray
    serving: np.ndarray
    p_max: np.ndarray

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=complex)
        if self.h.ndim != 3:
            raise ShapeMismatch(f"h must have shape (K, B, M), got {self.h.shape}")
        K, B, M = self.h.shape
        self.noise = np.broadcast_to(np.asarray(self.noise, dtype=float), (K,)).copy()
        self.serving = np.asarray(self.serving, dtype=int).reshape(-1)
        self.p_max = np.broadcast_to(np.asarray(self.p_max, dtype=float), (B,)).copy()
        if self.serving.shape != (K,):
            raise ShapeMismatch("serving map must have one entry per user")
        if M < 1 or B < 1 or K < B:
            raise ShapeMismatch(f"need M >= 1 and K >= B >= 1, got M={M}, K={K}, B={B}")
        if np.any(self.serving < 0) or np.any(self.serving >= B):
            raise ShapeMismatch("serving index out of range")
        if np.any(self.noise <= 0) or np.any(self.p_max <= 0):
            raise ValueError("noise powers and power limits must be positive")
        if not np.all(np.isfinite(self.h)):
            raise ValueError("channels must be finite")

    @property
    def K(self):
        return self.h.shape[0]

    @property
    def B(self):
        return self.h.shape[1]

    @property
    def M(self):
        return self.h.shape[2]

    def users_of(self, b):
        return np.flatnonzero(self.serving == b)

    @property
    def own_channels(self):
        """(K, M) array of h_{k, Pi(k)}."""
        return self.h[np.arange(self.K), self.serving]

    @property
    def routed(self):
        """(K, K, M) array with routed[i, k] = h_{i, Pi(k)}."""
        return self.h[:, self.serving, :]

    def user_power_limit(self):
        return self.p_max[self.serving]

    def replace_channels(self, h):
        return ChannelSet(h, self.noise, self.serving, self.p_max)

    def to_record(self):
        return {
            "h": np.stack([self.h.real, self.h.imag], axis=-1).tolist(),
            "noise": self.noise.tolist(),
            "serving": self.serving.tolist(),
            "p_max": self.p_max.tolist(),
        }

    @classmethod
    def from_record(cls, rec):
        arr = np.asarray(rec["h"], dtype=float)
        return cls(arr[..., 0] + 1j * arr[..., 1], rec["noise"], rec["serving"], rec["p_max"])


def _check_beams(ch, f):
    f = np.asarray(f, dtype=complex)
    if f.shape != (ch.K, ch.M):
        raise ShapeMismatch(f"beamformers must have shape {(ch.K, ch.M)}, got {f.shape}")
    return f


def _check_powers(ch, p):
    p = np.asarray(p, dtype=float)
    if p.shape != (ch.K,):
        raise ShapeMismatch(f"power vector must have length {ch.K}, got {p.shape}")
    return p


def gain_matrix(ch, f):
    """G[i, j] = f_j^H H_{i, Pi(j)} f_j, the normalized gain from user j's beam to user i."""
    f = _check_beams(ch, f)
    amp = np.einsum("ijm,jm->ij", ch.routed.conj(), f)
    return np.abs(amp) ** 2 / ch.noise[:, None]


def downlink_sinr(ch, f, p, k=None):
    G = gain_matrix(ch, f)
    p = _check_powers(ch, p)
    signal = p * np.diag(G)
    interference = G @ p - signal
    sinr = signal / (interference + 1.0)
    return sinr if k is None else sinr[k]


def uplink_sinr(ch, f, q, k=None):
    G = gain_matrix(ch, f)
    q = _check_powers(ch, q)
    signal = q * np.diag(G)
    # beam f_k is the receive filter at BS Pi(k); |f_k| = 1 gives the unit noise term
    interference = G.T @ q - signal
    sinr = signal / (interference + np.sum(np.abs(np.asarray(f)) ** 2, axis=1))
    return sinr if k is None else sinr[k]


def user_rate(sinr):
    sinr = np.asarray(sinr, dtype=float)
    if np.any(sinr < 0):
        raise NegativeSinr("SINR must be nonnegative")
    out = np.log2(1.0 + sinr)
    return float(out) if out.ndim == 0 else out


def per_bs_power(ch, p):
    p = _check_powers(ch, p)
    return np.bincount(ch.serving, weights=p, minlength=ch.B)


def uplink_covariances(ch, q, noise_weights=None):
    """C[k] = sum_{i != k} q_i H_{i, Pi(k)} + mu_{Pi(k)} I for every user k.

    ``noise_weights`` (per BS, default 1) scales the identity term; it is the
    cost weight of the per-BS weighted-power dual problem.
    """
    q = np.asarray(q, dtype=float)
    K, M = ch.K, ch.M
    w = np.broadcast_to(q / ch.noise, (K, K)).T.copy()
    np.fill_diagonal(w, 0.0)
    R = ch.routed
    C = np.einsum("ik,ikm,ikn->kmn", w, R, R.conj())
    mu = np.ones(ch.B) if noise_weights is None else np.asarray(noise_weights, dtype=float)
    C += mu[ch.serving][:, None, None] * np.eye(M)
    return C
