"""Distributed max-min beamforming with scalar-only inter-BS signaling.

Every BS is an agent that sees only its local CSI {h_kb, all k}. Rounds run
in lockstep:

1. each agent computes, for its served users, the MMSE receive beam for the
   current virtual-uplink powers and the interference value I_k(q);
2. agents broadcast g_k = gamma rho_k I_k(q) for their users (K(B-1) scalars
   per round in total);
3. every agent computes the same alpha = min_b P_b / sum_{k in K_b} g_k and
   the new powers q = alpha g;
4. agents refresh their beams for the new powers; the observer records the
   balanced level gamma = min_k SINR_k^UL / rho_k.

Under b-bit quantization an agent keeps its own users' powers at full
precision and holds the other users' powers on the uniform grid over
[0, P_BS]. The common scale alpha is treated as exact.
"""

from dataclasses import dataclass, field

import numpy as np

from .centralized import SolveOutcome, active_constraints, pareto_improve
from .duality import convert_powers, coupling_from_gains, excess_power
from .system_model import downlink_sinr, per_bs_power

DEFAULT_GAMMA0 = 1e-3


@dataclass
class DistributedConfig:
    """Stop rule ``eps_rel`` is relative to P_BS; ``fixed_iters`` overrides it."""

    eps_rel: float = 1e-6
    max_iters: int = 50
    fixed_iters: int = None
    quant_bits: int = 0
    init: str = "zeros"
    gamma0: float = DEFAULT_GAMMA0
    gamma_free: bool = False
    weights: object = None
    seed: int = None

    def __post_init__(self):
        if self.eps_rel <= 0:
            raise ValueError("eps must be positive")
        if self.init not in ("zeros", "random"):
            raise ValueError("init must be 'zeros' or 'random'")
        if self.quant_bits < 0:
            raise ValueError("quant_bits must be >= 0")


@dataclass
class BackhaulLog:
    """Every inter-BS transmission: (round, phase, sender, scalar count, payload)."""

    quant_bits: int = 0
    entries: list = field(default_factory=list)

    def send(self, round_index, phase, sender, payload, n_receivers):
        payload = np.asarray(payload, dtype=float)
        count = payload.size * n_receivers
        self.entries.append(
            {"round": round_index, "phase": phase, "sender": sender, "count": count, "payload": payload.copy()}
        )
        return count

    @property
    def total(self):
        return sum(e["count"] for e in self.entries)

    def count(self, phase):
        return sum(e["count"] for e in self.entries if e["phase"] == phase)


def quantize_scalar(x, bits, p_bs):
    """Round onto {i * P / (2^b - 1)}; ties round up, values above P clamp to P; b = 0 is exact."""
    if bits == 0:
        return x
    levels = 2**bits - 1
    step = p_bs / levels
    idx = np.floor(np.clip(np.asarray(x, dtype=float), 0.0, p_bs) / step + 0.5)
    out = np.minimum(idx, levels) * step
    return float(out) if np.ndim(out) == 0 else out


class BsAgent:
    """One BS: local channels h_{k,b} for all users and the beams of its own users."""

    def __init__(self, b, local_h, noise, serving, p_max, weights=None):
        self.b = b
        self.local_h = np.array(local_h, dtype=complex)  # (K, M): h_{k,b}
        self.noise = np.asarray(noise, dtype=float)
        self.serving = np.asarray(serving, dtype=int)
        self.p_max = np.asarray(p_max, dtype=float)
        self.served = np.flatnonzero(self.serving == b)
        K, M = self.local_h.shape
        self.rho = np.ones(K) if weights is None else np.asarray(weights, dtype=float)
        self.beams = {int(k): self.local_h[k] / np.linalg.norm(self.local_h[k]) for k in self.served}
        self.q_view = np.zeros(K)

    @classmethod
    def from_channels(cls, ch, b, weights=None):
        return cls(b, ch.h[:, b, :], ch.noise, ch.serving, ch.p_max, weights)

    def _covariance(self, k, q):
        w = q / self.noise
        w = w.copy()
        w[k] = 0.0
        C = (self.local_h.T * w) @ self.local_h.conj()
        return C + np.eye(self.local_h.shape[1])

    def local_beamformer_update(self, q=None):
        """MMSE beams f_k proportional to (sum_{i!=k} q_i H_{i,b} + I)^-1 h_{k,b} for served k."""
        q = self.q_view if q is None else np.asarray(q, dtype=float)
        for k in self.served:
            x = np.linalg.solve(self._covariance(k, q), self.local_h[k])
            self.beams[int(k)] = x / np.linalg.norm(x)
        return dict(self.beams)

    def _leak(self, k):
        f = self.beams[int(k)]
        return np.abs(self.local_h.conj() @ f) ** 2 / self.noise  # f_k^H H_{i,b} f_k for all i

    def interference_value(self, k, q=None):
        """I_k(q) = (sum_{i!=k} q_i f_k^H H_{i,b} f_k + 1) / f_k^H H_{k,b} f_k."""
        q = self.q_view if q is None else np.asarray(q, dtype=float)
        leak = self._leak(k)
        return float((q @ leak - q[k] * leak[k] + 1.0) / leak[k])

    def g_values(self, gamma, gamma_free=False):
        scale = 1.0 if gamma_free else gamma
        return np.array([scale * self.rho[k] * self.interference_value(k) for k in self.served])

    def receive_powers(self, q, bits):
        view = np.array(q, dtype=float)
        if bits:
            others = np.ones(len(view), dtype=bool)
            others[self.served] = False
            view[others] = quantize_scalar(view[others], bits, self.p_max[self.b])
        self.q_view = view

    def coupling_columns(self):
        """Gains f_j^H H_{i,b} f_j for served j and all i: column j of D^-1/Psi data."""
        return {int(k): self._leak(k) for k in self.served}


@dataclass
class IterationState:
    q: np.ndarray
    gamma: float
    n: int = 0
    alpha: float = np.nan


def make_agents(ch, weights=None):
    return [BsAgent.from_channels(ch, b, weights) for b in range(ch.B)]


def _observe_gamma(ch, agents, q, rho):
    f = np.zeros((ch.K, ch.M), dtype=complex)
    for a in agents:
        for k, fk in a.beams.items():
            f[k] = fk
    G = np.abs(np.einsum("ijm,jm->ij", ch.routed.conj(), f)) ** 2 / ch.noise[:, None]
    signal = q * np.diag(G)
    sinr = signal / (G.T @ q - signal + 1.0)
    return float(np.min(sinr / rho)), f


def run_iteration(agents, state, cfg, log, ch=None):
    """One synchronous round; returns the new IterationState.

    ``ch`` is used only by the observer that reports gamma; agents never
    touch it.
    """
    n = state.n + 1
    B = len(agents)
    g = np.zeros(len(agents[0].serving))
    for a in agents:
        a.local_beamformer_update()
        g_loc = a.g_values(state.gamma, cfg.gamma_free)
        g[a.served] = g_loc
        if B > 1:
            log.send(n, "iteration", a.b, g_loc, B - 1)
    p_max = agents[0].p_max
    sums = np.bincount(agents[0].serving, weights=g, minlength=B)
    alpha = float(np.min(p_max / sums))
    q = alpha * g
    for a in agents:
        a.receive_powers(q, cfg.quant_bits)
        a.local_beamformer_update()
    rho = agents[0].rho
    gamma = _observe_gamma(ch, agents, q, rho)[0] if ch is not None else state.gamma
    return IterationState(q=q, gamma=gamma, n=n, alpha=alpha)


def _initial_q(ch, cfg):
    if cfg.init == "zeros":
        return np.zeros(ch.K)
    rng = np.random.default_rng(cfg.seed)
    # uniform on (0, P_BS]
    return (1.0 - rng.random(ch.K)) * ch.user_power_limit()


def run_to_convergence(ch, cfg=None):
    """Iterate until |q^(n) - q^(n-1)| < eps (or exactly ``fixed_iters`` rounds).

    Returns an uplink SolveOutcome whose ``info['log']`` is the BackhaulLog.
    ``converged`` is False when ``max_iters`` ran out (last iterate returned).
    """
    cfg = cfg or DistributedConfig()
    rho = np.ones(ch.K) if cfg.weights is None else np.broadcast_to(np.asarray(cfg.weights, float), (ch.K,))
    agents = make_agents(ch, rho)
    log = BackhaulLog(quant_bits=cfg.quant_bits)
    q0 = _initial_q(ch, cfg)
    for a in agents:
        a.receive_powers(q0, cfg.quant_bits)
    state = IterationState(q=q0, gamma=cfg.gamma0)
    eps = cfg.eps_rel * float(ch.p_max.max())
    trace = []
    converged = False
    limit = cfg.fixed_iters if cfg.fixed_iters is not None else cfg.max_iters
    for _ in range(limit):
        new = run_iteration(agents, state, cfg, log, ch)
        trace.append(
            {"iteration": new.n, "gamma": new.gamma, "q": new.q.copy(), "alpha": new.alpha, "scalars_sent_cum": log.total}
        )
        step = np.linalg.norm(new.q - state.q)
        state = new
        if cfg.fixed_iters is None and step < eps:
            converged = True
            break
    if cfg.fixed_iters is not None:
        converged = True
    gamma, f = _observe_gamma(ch, agents, state.q, rho)
    return SolveOutcome(
        gamma=gamma,
        beamformers=f,
        powers=state.q,
        direction="uplink",
        active_bs=active_constraints(ch, state.q),
        trace=trace,
        backhaul_scalars=log.total,
        iterations=state.n,
        converged=converged,
        info={"log": log, "agents": agents, "weights": rho},
    )


def clip_per_bs(ch, p):
    """Scale the users of every BS whose load exceeds P_b by P_b / load; returns (p, clipped?)."""
    p = np.array(p, dtype=float)
    loads = per_bs_power(ch, p) / ch.p_max
    for b in np.flatnonzero(loads > 1.0):
        p[ch.users_of(b)] /= loads[b]
    return p, bool(np.any(loads > 1.0))


def finalize_downlink(ch, uplink, pareto=True):
    """Uplink solution -> downlink powers, per-BS clipping, then the Pareto step.

    Agents share their D/Psi columns (K^2 (B-1) scalars) and each solves the
    same linear system for the downlink powers. Any BS whose load exceeds P_BS
    has its users scaled down by P_BS / load.
    """
    agents = uplink.info["agents"]
    log = uplink.info["log"]
    rho = uplink.info["weights"]
    B = ch.B
    G = np.zeros((ch.K, ch.K))
    for a in agents:
        for j, col in a.coupling_columns().items():
            G[:, j] = col
            if B > 1:
                log.send(uplink.iterations + 1, "coupling", a.b, col, B - 1)
    p_bar = convert_powers(coupling_from_gains(G, uplink.gamma, rho))[0]
    phi = excess_power(p_bar, ch)
    p, clipped = clip_per_bs(ch, p_bar)
    f = uplink.beamformers
    sinr = downlink_sinr(ch, f, p)
    out = SolveOutcome(
        gamma=float(np.min(sinr / rho)),
        beamformers=f,
        powers=p,
        direction="downlink",
        active_bs=active_constraints(ch, p),
        trace=uplink.trace,
        backhaul_scalars=log.total,
        iterations=uplink.iterations,
        converged=uplink.converged,
        info={
            "log": log,
            "phi": phi,
            "clipped": clipped,
            "gamma_uplink": uplink.gamma,
            "p_unclipped": p_bar,
            "weights": rho,
        },
    )
    if pareto:
        out = pareto_improve(ch, out)
        out.gamma = float(np.min(downlink_sinr(ch, out.beamformers, out.powers) / rho))
    return out


def solve_distributed(ch, cfg=None, pareto=True):
    """Uplink iterations followed by the downlink finalization."""
    return finalize_downlink(ch, run_to_convergence(ch, cfg), pareto=pareto)


def export_trace_csv(outcome, path_or_buf):
    """Round trace as CSV: iteration, gamma, q_1..q_K, alpha, scalars_sent_cum."""
    import csv

    K = len(outcome.powers)
    own = isinstance(path_or_buf, str)
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        w = csv.writer(fh)
        w.writerow(["iteration", "gamma"] + [f"q_{k + 1}" for k in range(K)] + ["alpha", "scalars_sent_cum"])
        for row in outcome.trace:
            w.writerow([row["iteration"], repr(row["gamma"])] + [repr(float(x)) for x in row["q"]]
                       + [repr(row["alpha"]), row["scalars_sent_cum"]])
    finally:
        if own:
            fh.close()
