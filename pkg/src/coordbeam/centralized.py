"""Centralized two-step scheme: weighted SINR balancing, then Pareto improvement.

Step 1 solves

    max_{W, p} min_k SINR_k / rho_k   s.t.  sum_{k in K_b} p_k <= P_b  for all b

exactly. A per-BS constrained problem is feasible at level gamma iff it is
feasible for every nonnegative combination of the BS budgets, so the optimum
is the minimum over BS weights mu of the max-min level under the single
weighted budget sum_b mu_b P_b(p) <= sum_b mu_b P_b. Each weighted-budget
problem is solved through its virtual uplink (uplink noise mu_{Pi(k)}, uplink
sum budget sum_b mu_b P_b) with a normalized fixed-point iteration, which
gives an upper bound. The resulting beams with exactly balanced per-BS powers
give a feasible lower bound. Weights are updated multiplicatively towards the
overloaded BSs until the two bounds meet.

Step 2 pushes the least-powered user of every under-loaded BS to exhaust its
budget along the zero-forcing direction, which leaves the interference seen
by every other user unchanged.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, root

from . import numerics
from .duality import coupling_from_gains, convert_powers
from .errors import (
    BracketFailure,
    DegenerateDirection,
    NegativePower,
    NonConvergence,
    RankDeficient,
    SingularA,
    WrongDimensions,
)
from .system_model import (
    downlink_sinr,
    gain_matrix,
    per_bs_power,
    uplink_covariances,
    uplink_sinr,
    user_rate,
)

ACTIVE_RTOL = 1e-6


@dataclass
class BalancingConfig:
    """Knobs of the step-1 solvers.

    ``tol`` is the relative gap between the certified lower and upper bounds
    on the balanced level (also the bisection tolerance of the uplink route).
    ``gamma_bracket`` overrides the automatic [0, interference-free] bracket
    used by bisection; ``dual_step`` and ``dual_max_iter`` drive the projected
    subgradient of the fixed-target feasibility subsolver.
    """

    weights: object = None
    tol: float = 1e-5
    max_outer: int = 2000
    fp_tol: float = 1e-12
    fp_max_iter: int = 5000
    gamma_bracket: tuple = None
    bracket_expansions: int = 40
    dual_step: float = 1.0
    dual_max_iter: int = 2000
    dual_gap_rtol: float = 1e-6


@dataclass
class SolveOutcome:
    gamma: float
    beamformers: np.ndarray
    powers: np.ndarray
    direction: str = "downlink"
    active_bs: np.ndarray = None
    trace: list = field(default_factory=list)
    backhaul_scalars: int = 0
    iterations: int = 0
    converged: bool = True
    info: dict = field(default_factory=dict)

    def rates(self, ch):
        if self.direction != "downlink":
            raise ValueError("rates are defined for downlink outcomes")
        return user_rate(downlink_sinr(ch, self.beamformers, self.powers))

    def to_record(self):
        f = np.asarray(self.beamformers)
        return {
            "gamma": float(self.gamma),
            "direction": self.direction,
            "beamformers": np.stack([f.real, f.imag], axis=-1).tolist(),
            "powers": np.asarray(self.powers, dtype=float).tolist(),
            "active_bs": None if self.active_bs is None else [bool(a) for a in self.active_bs],
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "backhaul_scalars": int(self.backhaul_scalars),
            "trace": [{k: _plain(v) for k, v in row.items()} for row in self.trace],
        }


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    return v


def _weights(ch, cfg):
    if cfg.weights is None:
        return np.ones(ch.K)
    rho = np.broadcast_to(np.asarray(cfg.weights, dtype=float), (ch.K,)).copy()
    if np.any(rho <= 0):
        raise ValueError("weights must be positive")
    return rho


def _canonical_rows(f):
    return np.stack([numerics.canonical_phase(row) for row in f])


def interference_free_bound(ch, rho):
    """Largest weighted SINR any user could reach alone at full power."""
    own = np.sum(np.abs(ch.own_channels) ** 2, axis=1) / ch.noise
    return float(np.min(ch.user_power_limit() * own / rho))


def active_constraints(ch, p, rtol=ACTIVE_RTOL):
    return per_bs_power(ch, p) >= ch.p_max * (1 - rtol)


# ---------------------------------------------------------------- step 1


def _mmse_beams(ch, q, mu=None):
    C = uplink_covariances(ch, q, mu)
    f, gain = numerics.mmse_directions(C, ch.own_channels)
    return f, gain / ch.noise


def weighted_budget_balance(ch, mu, rho, q0=None, tol=1e-12, max_iter=5000):
    """Max-min level under the single budget sum_b mu_b P_b(p) <= sum_b mu_b P_b.

    Solved in the virtual uplink: uplink noise mu_{Pi(k)} and uplink sum power
    sum_b mu_b P_b. Returns (gamma, q, f) with q the normalized fixed point.
    """
    budget = float(np.dot(mu, ch.p_max))
    q = np.full(ch.K, budget / ch.K) if q0 is None else np.asarray(q0, dtype=float)
    for it in range(max_iter):
        f, gain = _mmse_beams(ch, q, mu)
        t = rho / gain
        q_new = budget * t / t.sum()
        done = np.max(np.abs(q_new - q)) <= tol * budget
        q = q_new
        if done:
            break
    f, gain = _mmse_beams(ch, q, mu)
    t = rho / gain
    return budget / t.sum(), q, f


def balance_fixed_beams(ch, f, rho=None):
    """Exact per-BS max-min power allocation for fixed beamformers.

    Returns (gamma, p): the largest common weighted SINR reachable with beams
    ``f`` and the power vector reaching it with equality for every user.
    """
    rho = np.ones(ch.K) if rho is None else np.asarray(rho, dtype=float)
    G = gain_matrix(ch, f)
    if np.any(np.diag(G) <= 0):
        return 0.0, np.zeros(ch.K)

    def powers(g):
        return convert_powers(coupling_from_gains(G, g, rho))[0]

    def excess(g):
        if g <= 0:
            return -1.0
        try:
            p = powers(g)
        except (SingularA, NegativePower):
            return 1e300
        return float(np.max(per_bs_power(ch, p) / ch.p_max) - 1.0)

    hi = float(np.min(ch.user_power_limit() * np.diag(G) / rho)) * (1 + 1e-9)
    if excess(hi) < 0:  # cannot happen for a valid bound; guards float noise
        hi *= 2
    lo = hi * 1e-12  # loads scale like gamma near zero, so this end is far below the limits
    g = brentq(excess, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    p = powers(g)
    load = np.max(per_bs_power(ch, p) / ch.p_max)
    if load > 1:
        p = p / load
    sinr = downlink_sinr(ch, f, p)
    return float(np.min(sinr / rho)), p


def solve_max_min(ch, cfg=None):
    """Weighted SINR balancing under per-BS power limits (step 1)."""
    cfg = cfg or BalancingConfig()
    rho = _weights(ch, cfg)
    B = ch.B
    mu = np.ones(B)
    q = None
    upper = np.inf
    best = None
    trace = []
    for it in range(1, cfg.max_outer + 1):
        g_up, q, f = weighted_budget_balance(ch, mu, rho, q, cfg.fp_tol, cfg.fp_max_iter)
        upper = min(upper, g_up)
        g_lo, p = balance_fixed_beams(ch, f, rho)
        if best is None or g_lo > best[0]:
            best = (g_lo, f, p)
        trace.append({"iteration": it, "gamma_lower": best[0], "gamma_upper": upper, "mu": mu.copy()})
        if upper - best[0] <= cfg.tol * upper or B == 1 and it > 1:
            break
        # downlink loads of the weighted-budget optimum steer the BS weights
        try:
            p_mu = convert_powers(coupling_from_gains(gain_matrix(ch, f), g_up, rho))[0]
        except (SingularA, NegativePower):
            p_mu = p
        loads = np.maximum(per_bs_power(ch, p_mu) / ch.p_max, 1e-300)
        mu = mu * loads
        mu = np.maximum(mu / mu.sum() * B, 1e-12 * B)
    else:
        raise NonConvergence(f"bound gap {upper - best[0]:.3e} after {cfg.max_outer} iterations", trace)
    g_lo, f, p = best
    f = _canonical_rows(f)
    return SolveOutcome(
        gamma=g_lo,
        beamformers=f,
        powers=p,
        direction="downlink",
        active_bs=active_constraints(ch, p),
        trace=trace,
        iterations=len(trace),
        info={"gamma_upper": upper, "mu": mu},
    )


def _min_uplink_powers(ch, gamma, rho, mu=None, load_cap=None, sum_cap=None, tol=1e-12, max_iter=5000):
    """Standard (Yates) fixed point q = gamma rho I(q) started from zero.

    The iterates increase monotonically towards the minimal power vector, so
    crossing ``load_cap`` (per-BS, relative to P_b) or ``sum_cap`` certifies
    that the minimal vector crosses it too. Returns (status, q, f) with status
    in {"converged", "over", "stalled"}.
    """
    q = np.zeros(ch.K)
    f = None
    for _ in range(max_iter):
        f, gain = _mmse_beams(ch, q, mu)
        q_new = gamma * rho / gain
        if load_cap is not None and np.any(per_bs_power(ch, q_new) > load_cap * ch.p_max):
            return "over", q_new, f
        if sum_cap is not None and q_new.sum() > sum_cap:
            return "over", q_new, f
        done = np.max(np.abs(q_new - q)) <= tol * max(q_new.max(), 1e-300)
        q = q_new
        if done:
            f, _ = _mmse_beams(ch, q, mu)
            return "converged", q, f
    return "stalled", q, f


def _recover_primal(evaluate, lam, loads):
    """Strictly feasible primal point near the dual optimum, or None.

    At the dual optimum the binding BSs sit exactly at their limits, so
    rounding leaves some of them marginally over. The multipliers of the
    binding set are re-solved so that those loads equal 1 - delta; for a target
    with any slack this is reachable for small delta.
    """
    idx = np.flatnonzero((lam > 0) | (loads > 1.0))
    if idx.size == 0:
        return None

    def at(x):
        trial = lam.copy()
        trial[idx] = np.abs(x)
        return evaluate(trial)

    for delta in (1e-7, 1e-5, 1e-3, 1e-2):
        def residual(x):
            status, _, _, _, ld = at(x)
            return ld[idx] - (1.0 - delta) if status == "converged" else np.full(idx.size, 1e3)

        sol = root(residual, lam[idx], method="hybr", options={"xtol": 1e-13})
        status, f, p, _, ld = at(sol.x)
        if status == "converged" and np.all(ld <= 1 + 1e-9):
            return f, p
    return None


def solve_sum_power_feasibility(ch, gamma, cfg=None):
    """Minimum sum-power beamforming at weighted target ``gamma`` under per-BS limits.

    Lagrange dual over per-BS multipliers lambda: for fixed lambda the problem
    is a weighted sum-power minimization whose virtual uplink has noise
    1 + lambda_b at BS b, solved by the standard fixed point. lambda moves by
    projected ascent along the per-BS overload (the dual gradient); the step
    starts at ``dual_step``, doubles after every accepted move and halves when
    the dual value would drop.

    Returns (feasible, f, p). Feasibility is certified by a primal point that
    meets every limit; infeasibility by a dual value above sum_b P_b (no
    feasible point can cost more) or by a diverging fixed point.
    """
    cfg = cfg or BalancingConfig()
    rho = _weights(ch, cfg)
    if gamma <= 0:
        raise ValueError("target must be positive")
    total = float(ch.p_max.sum())

    def evaluate(lam):
        status, q, f = _min_uplink_powers(
            ch, gamma, rho, 1.0 + lam, sum_cap=total + float(lam @ ch.p_max), tol=cfg.fp_tol,
            max_iter=cfg.fp_max_iter,
        )
        dual = q.sum() - float(lam @ ch.p_max)
        if status != "converged":
            return status, f, q, dual, None
        try:
            p = convert_powers(coupling_from_gains(gain_matrix(ch, f), gamma, rho))[0]
        except (SingularA, NegativePower):
            return "stalled", f, q, dual, None
        return status, f, p, dual, per_bs_power(ch, p) / ch.p_max

    lam = np.zeros(ch.B)
    status, f, p, dual, loads = evaluate(lam)
    best = None
    trace = []
    step = cfg.dual_step
    for t in range(1, cfg.dual_max_iter + 1):
        trace.append({"iteration": t, "dual": dual, "lambda": lam.copy(), "status": status, "step": step})
        if status == "over":
            return False, f, p
        if status == "stalled":
            break
        if np.all(loads <= 1 + 1e-9):
            if best is None or p.sum() < best[1].sum():
                best = (f, p)
            if best[1].sum() - dual <= cfg.dual_gap_rtol * best[1].sum():
                break
        cand = np.maximum(0.0, lam + step * (loads - 1.0))
        if np.array_equal(cand, lam):
            break
        c_status, c_f, c_p, c_dual, c_loads = evaluate(cand)
        if c_status == "over" or c_dual >= dual:
            lam, status, f, p, dual, loads = cand, c_status, c_f, c_p, c_dual, c_loads
            step *= 2.0
        else:
            step *= 0.5
            if step < 1e-14 * (1.0 + lam.max()):
                break
    if best is None and status == "converged":
        best = _recover_primal(evaluate, lam, loads)
    if best is not None:
        f, p = best
        return True, _canonical_rows(f), p
    raise NonConvergence(f"no feasibility certificate at gamma={gamma:g}", trace)


def solve_max_min_uplink(ch, cfg=None):
    """Per-BS constrained max-min for the virtual uplink, by bisection on gamma.

    Each target is checked with the standard fixed point from zero (monotone
    iterates, so any BS crossing its limit is a certificate of infeasibility).
    """
    cfg = cfg or BalancingConfig()
    rho = _weights(ch, cfg)
    if cfg.gamma_bracket is not None:
        lo, hi = map(float, cfg.gamma_bracket)
    else:
        lo, hi = 0.0, interference_free_bound(ch, rho) * (1 + 1e-9)

    def feasible(g):
        status, q, f = _min_uplink_powers(ch, g, rho, load_cap=1.0 + 1e-12, tol=1e-13, max_iter=cfg.fp_max_iter)
        return status == "converged", q, f

    ok, q_hi, f_hi = feasible(hi)
    expansions = 0
    while ok:
        if cfg.gamma_bracket is None:
            break  # the interference-free bound is attained (decoupled users)
        expansions += 1
        if expansions > cfg.bracket_expansions:
            raise BracketFailure(f"upper bracket {hi:g} still feasible")
        lo, hi = hi, hi * 2
        ok, q_hi, f_hi = feasible(hi)
    if ok:
        best = (hi, q_hi, f_hi)
    else:
        best = None
        trace = []
        while hi - lo > cfg.tol * hi * 1e-2:
            mid = 0.5 * (lo + hi)
            ok, q, f = feasible(mid)
            trace.append({"gamma": mid, "feasible": ok})
            if ok:
                lo, best = mid, (mid, q, f)
            else:
                hi = mid
        if best is None:
            ok, q, f = feasible(lo) if lo > 0 else (False, None, None)
            if not ok:
                raise NonConvergence("no feasible uplink target found", trace)
            best = (lo, q, f)
    g, q, f = best
    # scale the minimal vector up to the binding BS: same beams, level >= g
    q = q / np.max(per_bs_power(ch, q) / ch.p_max)
    f, _ = _mmse_beams(ch, q)
    gamma = float(np.min(uplink_sinr(ch, f, q) / rho))
    return SolveOutcome(
        gamma=gamma,
        beamformers=_canonical_rows(f),
        powers=q,
        direction="uplink",
        active_bs=active_constraints(ch, q),
        iterations=0,
    )


# ---------------------------------------------------------------- step 2


def zf_direction(ch, k):
    """Projection of h_{k,Pi(k)} onto the complement of all other users' channels from BS Pi(k)."""
    b = ch.serving[k]
    # an all-zero channel imposes no nulling constraint
    others = [ch.h[i, b] for i in range(ch.K) if i != k and np.linalg.norm(ch.h[i, b]) > numerics.ZERO_CHANNEL_ATOL]
    return numerics.project_complement(ch.h[k, b], others)


def pareto_improve(ch, outcome):
    """Spend the unused budget of every under-loaded BS on its least-powered user.

    The user's new beam adds a component along its zero-forcing direction, so
    the interference it causes to everybody else is unchanged while its own
    received power grows. BSs whose zero-forcing direction vanishes are left
    untouched (recorded in ``info['pareto_skipped']``).
    """
    f = np.array(outcome.beamformers, dtype=complex)
    p = np.array(outcome.powers, dtype=float)
    loads = per_bs_power(ch, p)
    updated, skipped = [], []
    for b in range(ch.B):
        users = ch.users_of(b)
        if len(users) == 0 or loads[b] >= ch.p_max[b] * (1 - 1e-9):
            continue
        k = int(users[np.argmin(p[users])])
        try:
            f[k], p[k] = _zf_boost(ch, k, f[k], p[k], ch.p_max[b] - (loads[b] - p[k]))
        except (RankDeficient, DegenerateDirection) as exc:
            skipped.append((k, type(exc).__name__))
            continue
        updated.append(k)
    info = dict(outcome.info)
    info.update(pareto_updates=updated, pareto_skipped=skipped, step1_beamformers=outcome.beamformers,
                step1_powers=outcome.powers)
    return SolveOutcome(
        gamma=outcome.gamma,
        beamformers=f,
        powers=p,
        direction="downlink",
        active_bs=active_constraints(ch, p),
        trace=outcome.trace,
        backhaul_scalars=outcome.backhaul_scalars,
        iterations=outcome.iterations,
        converged=outcome.converged,
        info=info,
    )


def _zf_boost(ch, k, f_k, p_k, p_new):
    b = ch.serving[k]
    h = ch.h[k, b]
    h_zf = zf_direction(ch, k)
    if np.linalg.norm(h_zf) < 1e-12 * np.linalg.norm(h):
        raise DegenerateDirection(f"user {k} has no zero-forcing room at BS {b}")
    phase = np.exp(1j * np.angle(np.vdot(h, f_k)))
    x = np.sqrt(p_k) * f_k
    y = phase * h_zf
    a = np.vdot(y, y).real
    half_b = np.vdot(x, y).real
    c = p_k - p_new
    alpha = (-half_b + np.sqrt(half_b**2 - a * c)) / a
    return (x + alpha * y) / np.sqrt(p_new), p_new


def two_step(ch, cfg=None):
    return pareto_improve(ch, solve_max_min(ch, cfg))


def verify_pareto_2user(ch, outcome, resolution=100):
    """Largest amount by which a boundary point beats ``outcome`` in both rates.

    Values at or below the grid tolerance mean no sampled boundary point
    dominates the outcome's rate pair.
    """
    if not (ch.K == ch.B == 2 and ch.M >= 2):
        raise WrongDimensions("dominance check needs K = B = 2 and M >= 2")
    from .baselines import pareto_boundary_2user

    r = outcome.rates(ch)
    pts = np.array([pt.rates for pt in pareto_boundary_2user(ch, resolution)])
    return float(np.max(np.min(pts - r[None, :], axis=1)))
