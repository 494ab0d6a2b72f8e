"""Independent reference computations used as test oracles."""

import numpy as np

from coordbeam.scenario import TopologyConfig, drop_seed, generate_drop
from coordbeam.system_model import ChannelSet


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def iid_instance(rng, M, K, B, snr_db=10.0, cross=0.5):
    """Gaussian channels with cross-link power ``cross`` relative to the serving link."""
    serving = np.arange(K) % B
    h = crandn(rng, K, B, M) * np.sqrt(cross)
    h[np.arange(K), serving] /= np.sqrt(cross)
    return ChannelSet(h, 1.0, serving, 10 ** (snr_db / 10))


def drop_instance(seed, M, K, B, snr_db):
    cfg = TopologyConfig(n_bs=B, antennas=M, users_per_bs=K // B)
    return generate_drop(cfg, drop_seed(seed, 0)).channel_set(snr_db)


def sinr_matrix_form(ch, f, p):
    """Downlink SINRs from an explicit loop over users (reference for the vectorized code)."""
    out = np.zeros(ch.K)
    for k in range(ch.K):
        sig = p[k] * abs(np.vdot(ch.h[k, ch.serving[k]], f[k])) ** 2 / ch.noise[k]
        intf = sum(p[j] * abs(np.vdot(ch.h[k, ch.serving[j]], f[j])) ** 2 / ch.noise[k]
                   for j in range(ch.K) if j != k)
        out[k] = sig / (intf + 1)
    return out


def socp_max_min(ch, rho=None, iters=40):
    """Per-BS power constrained weighted max-min SINR by bisection over SOCP feasibility (cvxpy)."""
    import cvxpy as cp

    K, B, M = ch.K, ch.B, ch.M
    rho = np.ones(K) if rho is None else np.asarray(rho, float)

    scale = np.sqrt(ch.p_max.max())

    def feasible(g):
        # W = scale * V keeps the variables O(1)
        V = cp.Variable((M, K), complex=True)
        cons = []
        for k in range(K):
            sn = np.sqrt(ch.noise[k])
            amps = [scale * ch.h[k, ch.serving[j]].conj() @ V[:, j] / sn for j in range(K)]
            cons += [cp.imag(amps[k]) == 0,
                     cp.SOC(np.sqrt(1 + 1 / (g * rho[k])) * cp.real(amps[k]), cp.hstack(amps + [1]))]
        for b in range(B):
            ks = [k for k in range(K) if ch.serving[k] == b]
            cons.append(cp.sum_squares(V[:, ks]) <= ch.p_max[b] / scale**2)
        prob = cp.Problem(cp.Minimize(cp.sum_squares(V)), cons)
        try:
            prob.solve(solver=cp.CLARABEL)
        except cp.error.SolverError:
            return False
        # right at the boundary the solver flags its answers as inaccurate (~1e-4 relative in gamma)
        return prob.status in ("optimal", "optimal_inaccurate")

    lo, hi = 0.0, 1.0
    while feasible(hi):
        lo, hi = hi, hi * 2
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def _sinr_pair(s1, l21, s2, l12, p1, p2):
    """Two-user SINRs: s = own gain, l_ij = gain from j's beam at user i."""
    return p1 * s1 / (p2 * l21 + 1), p2 * s2 / (p1 * l12 + 1)


def downlink_grid_max_min(ch, n=200):
    """Exhaustive max-min for K = B = 2 and M in {1, 2}.

    M = 1: power grid of n x n. M = 2: each beam on an n x n grid of
    (cos t, sin t e^{j phi}); only beams on the (max signal, min leakage)
    frontier are kept, and for each pair one BS transmits at full power while
    the other sweeps n levels.
    """
    assert ch.K == ch.B == 2
    P1, P2 = ch.p_max
    b1, b2 = ch.serving
    if ch.M == 1:
        f = np.ones((1, 1))
        beams = [f, f]
    else:
        t = np.linspace(0, np.pi / 2, n)
        ph = np.linspace(0, 2 * np.pi, n, endpoint=False)
        T, PH = np.meshgrid(t, ph, indexing="ij")
        grid = np.stack([np.cos(T).ravel(), (np.sin(T) * np.exp(1j * PH)).ravel()], axis=1)
        beams = [grid, grid]
    stats = []
    for k, (b, other) in enumerate(((b1, 1), (b2, 0))):
        F = beams[k]
        s = np.abs(F @ ch.h[k, b].conj()) ** 2 / ch.noise[k]
        leak = np.abs(F @ ch.h[other, b].conj()) ** 2 / ch.noise[other]
        order = np.lexsort((leak, -s))
        keep, best = [], np.inf
        for i in order:
            if leak[i] < best:
                keep.append(i)
                best = leak[i]
        stats.append((s[keep], leak[keep]))
    (s1, l12), (s2, l21) = stats
    S1, L12 = s1[:, None], l12[:, None]
    S2, L21 = s2[None, :], l21[None, :]
    best = 0.0
    levels = np.linspace(0, 1, n)
    if ch.M == 1:
        p1 = (levels * P1)[:, None]
        p2 = (levels * P2)[None, :]
        g1, g2 = _sinr_pair(S1, L21, S2, L12, p1, p2)
        return float(np.max(np.minimum(g1, g2)))
    for lv in levels:
        for p1, p2 in ((P1, lv * P2), (lv * P1, P2)):
            g1, g2 = _sinr_pair(S1, L21, S2, L12, p1, p2)
            best = max(best, float(np.max(np.minimum(g1, g2))))
    return best


def uplink_grid_max_min(ch, n=200):
    """Exhaustive virtual-uplink max-min for K = B = 2: grid over (q1, q2), MMSE receivers in closed form."""
    assert ch.K == ch.B == 2
    q1 = np.linspace(0, ch.p_max[ch.serving[0]], n)
    q2 = np.linspace(0, ch.p_max[ch.serving[1]], n)
    Q1, Q2 = np.meshgrid(q1, q2, indexing="ij")
    out = []
    for k, (qk, qi) in enumerate(((Q1, Q2), (Q2, Q1))):
        b = ch.serving[k]
        hk = ch.h[k, b] / np.sqrt(ch.noise[k])
        hi = ch.h[1 - k, b] / np.sqrt(ch.noise[1 - k])
        # h^H (I + q_i hi hi^H)^-1 h = |hk|^2 - q_i |hi^H hk|^2 / (1 + q_i |hi|^2)
        gain = np.vdot(hk, hk).real - qi * abs(np.vdot(hi, hk)) ** 2 / (1 + qi * np.vdot(hi, hi).real)
        out.append(qk * gain)
    return float(np.max(np.minimum(*out)))
