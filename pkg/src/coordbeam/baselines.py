"""Reference schemes: selfish MRT (NE), SGINR precoding, Nash bargaining, and
the two-user Pareto boundary search.
"""

from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .errors import DegenerateDirection, NonConvergence, RankDeficient, WrongDimensions
from .system_model import downlink_sinr, gain_matrix, per_bs_power, user_rate

LN2 = np.log(2.0)


@dataclass
class RatePoint:
    rates: np.ndarray
    label: str = ""
    beamformers: np.ndarray = None
    powers: np.ndarray = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rates = np.asarray(self.rates, dtype=float)
        if np.any(self.rates < 0):
            raise ValueError("rates must be nonnegative")

    @property
    def worst(self):
        return float(self.rates.min())

    @property
    def total(self):
        return float(self.rates.sum())


def equal_split_powers(ch):
    counts = np.bincount(ch.serving, minlength=ch.B)
    return ch.p_max[ch.serving] / counts[ch.serving]


def mrt_beams(ch):
    h = ch.own_channels
    return np.stack([numerics.canonical_phase(v / np.linalg.norm(v)) for v in h])


def ne_solution(ch):
    """Every BS beams MRT to its users and spends its budget in equal shares."""
    return mrt_beams(ch), equal_split_powers(ch)


def _victim_covariance(ch, k):
    b = ch.serving[k]
    C = np.zeros((ch.M, ch.M), dtype=complex)
    for i in range(ch.K):
        if i != k:
            v = ch.h[i, b]
            C += np.outer(v, v.conj()) / ch.noise[i]
    return C


def sginr_solution(ch, interference_weight=None):
    """Signal-to-generated-interference-plus-noise beams at equal-split full power.

    f_k maximizes |h_{k,Pi(k)}^H f|^2 / (f^H (I + w_k sum_{i!=k} H_{i,Pi(k)}) f).
    By default w_k = p_k, the user's own transmit power, so the quotient is the
    ratio of received signal to the noise-normalized leakage it creates; pass
    ``interference_weight`` to override w_k (scalar or per user).
    """
    p = equal_split_powers(ch)
    if interference_weight is None:
        w = p
    else:
        w = np.broadcast_to(np.asarray(interference_weight, dtype=float), (ch.K,))
    f = np.zeros((ch.K, ch.M), dtype=complex)
    for k in range(ch.K):
        B = np.eye(ch.M) + w[k] * _victim_covariance(ch, k)
        f[k] = numerics.mmse_direction(B, ch.h[k, ch.serving[k]])
    return f, p


# ---------------------------------------------------------------- Nash bargaining


@dataclass
class NbsConfig:
    tol: float = 1e-6
    max_outer: int = 100
    power_steps: int = 30
    beam_grid: tuple = tuple(np.concatenate([[0.0], np.logspace(-3, 3, 25)]))


def _project_budget(ch, p):
    """Euclidean projection onto {p >= 0, sum_{k in K_b} p_k <= P_b for all b}."""
    out = np.maximum(p, 0.0)
    for b in range(ch.B):
        idx = ch.users_of(b)
        v = out[idx]
        if v.sum() <= ch.p_max[b]:
            continue
        u = np.sort(p[idx])[::-1]
        css = np.cumsum(u) - ch.p_max[b]
        r = np.nonzero(u - css / np.arange(1, len(u) + 1) > 0)[0][-1]
        theta = css[r] / (r + 1)
        out[idx] = np.maximum(p[idx] - theta, 0.0)
    return out


def _nbs_objective(ch, f, p, r_ne):
    gain = user_rate(downlink_sinr(ch, f, p)) - r_ne
    if np.any(gain <= 0):
        return -np.inf
    return float(np.sum(np.log(gain)))


def _nbs_power_gradient(ch, f, p, r_ne):
    G = gain_matrix(ch, f)
    signal = p * np.diag(G)
    den = G @ p - signal + 1.0
    sinr = signal / den
    rates = np.log2(1 + sinr)
    # dR_k/dp_j = (dS_k/dp_j) / ((1 + S_k) ln 2)
    dS = -(sinr / den)[:, None] * G
    dS[np.diag_indices(ch.K)] = np.diag(G) / den
    dR = dS / ((1 + sinr) * LN2)[:, None]
    return (1.0 / (rates - r_ne)) @ dR


def _nbs_power_step(ch, f, p, r_ne, cfg):
    obj = _nbs_objective(ch, f, p, r_ne)
    for _ in range(cfg.power_steps):
        grad = _nbs_power_gradient(ch, f, p, r_ne)
        step = float(ch.p_max.max()) / max(np.abs(grad).max(), 1e-300)
        improved = False
        while step > 1e-12 * ch.p_max.max():
            cand = _project_budget(ch, p + step * grad)
            val = _nbs_objective(ch, f, cand, r_ne)
            if val > obj + 1e-4 * np.dot(grad, cand - p):
                p, obj, improved = cand, val, True
                break
            step *= 0.5
        if not improved:
            break
    return p, obj


def _nbs_beam_step(ch, f, p, r_ne, cfg):
    obj = _nbs_objective(ch, f, p, r_ne)
    for k in range(ch.K):
        b = ch.serving[k]
        C = _victim_covariance(ch, k)
        for t in cfg.beam_grid:
            cand = f.copy()
            cand[k] = numerics.mmse_direction(np.eye(ch.M) + t * p[k] * C, ch.h[k, b])
            val = _nbs_objective(ch, cand, p, r_ne)
            if val > obj:
                f, obj = cand, val
    return f, obj


def nbs_solution(ch, cfg=None):
    """Nash bargaining over the NE disagreement point, by alternating optimization.

    The start point is the weighted max-min solution with weights SINR_k^NE;
    if its level is at most 1, no point strictly improves every user and NE is
    returned with ``info['empty'] = True``.
    """
    from .centralized import BalancingConfig, solve_max_min

    cfg = cfg or NbsConfig()
    f_ne, p_ne = ne_solution(ch)
    r_ne = user_rate(downlink_sinr(ch, f_ne, p_ne))
    ne_point = RatePoint(r_ne, "nbs", f_ne, p_ne, {"empty": True, "iterations": 0})
    weights = np.maximum(downlink_sinr(ch, f_ne, p_ne), 1e-300)
    try:
        start = solve_max_min(ch, BalancingConfig(weights=weights, tol=1e-6))
    except NonConvergence:
        return f_ne, p_ne, ne_point
    if start.gamma <= 1.0 + 1e-9:
        return f_ne, p_ne, ne_point
    f = np.array(start.beamformers, dtype=complex)
    p = np.array(start.powers, dtype=float)
    obj = _nbs_objective(ch, f, p, r_ne)
    it = 0
    for it in range(1, cfg.max_outer + 1):
        p, _ = _nbs_power_step(ch, f, p, r_ne, cfg)
        f, new = _nbs_beam_step(ch, f, p, r_ne, cfg)
        gain = new - obj
        obj = new
        if gain < cfg.tol:
            break
    rates = user_rate(downlink_sinr(ch, f, p))
    return f, p, RatePoint(rates, "nbs", f, p, {"empty": False, "iterations": it, "objective": obj})


# ---------------------------------------------------------------- 2-user boundary


def _candidates(ch, k, resolution):
    """Per-user (beam, power) candidates: full-power MRT/ZF combinations plus power sweeps."""
    from .centralized import zf_direction

    b = ch.serving[k]
    h = ch.h[k, b]
    mrt = h / np.linalg.norm(h)
    P = ch.p_max[b]
    levels = np.linspace(0.0, P, resolution)
    try:
        zf = zf_direction(ch, k)
        if np.linalg.norm(zf) < 1e-12 * np.linalg.norm(h):
            raise DegenerateDirection("zero ZF component")
        zf = zf / np.linalg.norm(zf)
    except (RankDeficient, DegenerateDirection):
        return np.repeat(mrt[None], resolution, axis=0), levels
    lam = np.linspace(0.0, 1.0, resolution)
    mix = lam[:, None] * zf[None] + (1 - lam)[:, None] * mrt[None]
    mix /= np.linalg.norm(mix, axis=1, keepdims=True)
    beams = np.concatenate([mix, np.repeat(mrt[None], resolution, 0), np.repeat(zf[None], resolution, 0)])
    powers = np.concatenate([np.full(resolution, P), levels, levels])
    return beams, powers


def _staircase(r1, r2):
    order = np.lexsort((-r2, -r1))
    keep = []
    best = -np.inf
    for i in order:
        if r2[i] > best:
            keep.append(i)
            best = r2[i]
    return np.array(keep[::-1])


def pareto_boundary_2user(ch, resolution=100):
    """Non-dominated rate pairs of a K = B = 2 instance, sorted by R1 ascending.

    Each user's beam ranges over normalized combinations of its MRT and
    zero-forcing directions at full power, plus power sweeps along MRT and ZF;
    all candidate pairs are evaluated and the upper-right staircase returned.
    """
    if not (ch.K == 2 and ch.B == 2):
        raise WrongDimensions("boundary search needs K = B = 2")
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    f1, p1 = _candidates(ch, 0, resolution)
    f2, p2 = _candidates(ch, 1, resolution)
    b1, b2 = ch.serving
    s1 = p1 * np.abs(f1 @ ch.h[0, b1].conj()) ** 2 / ch.noise[0]
    s2 = p2 * np.abs(f2 @ ch.h[1, b2].conj()) ** 2 / ch.noise[1]
    leak_to_1 = p2 * np.abs(f2 @ ch.h[0, b2].conj()) ** 2 / ch.noise[0]
    leak_to_2 = p1 * np.abs(f1 @ ch.h[1, b1].conj()) ** 2 / ch.noise[1]
    R1 = np.log2(1 + s1[:, None] / (leak_to_1[None, :] + 1))
    R2 = np.log2(1 + s2[None, :] / (leak_to_2[:, None] + 1))
    R1, R2 = R1.ravel(), R2.ravel()
    keep = _staircase(R1, R2)
    n2 = len(p2)
    out = []
    for idx in keep:
        i, j = divmod(int(idx), n2)
        out.append(RatePoint([R1[idx], R2[idx]], "boundary", np.stack([f1[i], f2[j]]), np.array([p1[i], p2[j]])))
    return out


def boundary_max_sum(ch, resolution=100):
    pts = pareto_boundary_2user(ch, resolution)
    return max(pts, key=lambda pt: pt.total)


def dominance_gap(points, rates):
    """max over points of min_k (point_k - rates_k): positive means some point beats ``rates`` for every user."""
    pts = np.array([pt.rates if isinstance(pt, RatePoint) else pt for pt in points])
    return float(np.max(np.min(pts - np.asarray(rates)[None, :], axis=1)))


def export_boundary_csv(points, path):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r1", "r2"])
        for pt in points:
            w.writerow([repr(float(pt.rates[0])), repr(float(pt.rates[1]))])


def scheme_rates(ch, f, p):
    return user_rate(downlink_sinr(ch, f, p))


def per_bs_feasible(ch, p, rtol=1e-9):
    return bool(np.all(per_bs_power(ch, p) <= ch.p_max * (1 + rtol)))
