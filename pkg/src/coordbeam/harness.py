"""Monte-Carlo experiment driver: drops x SNRs x schemes -> CSV metrics and CDFs."""

import csv
import io
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import baselines, centralized, distributed
from .duality import diag_dominance
from .errors import CoordBeamError, EmptySamples, ZeroReference
from .scenario import CsiErrorConfig, TopologyConfig, drop_seed, generate_drop, load_config, perturb_csi
from .system_model import downlink_sinr, user_rate

EXPERIMENTS = (
    "fig1_boundary",
    "fig3_phi_cdf",
    "fig4_worst_rate",
    "fig5_worst_cdf",
    "fig6_sumrate_cdf",
    "fig7_quantization",
    "fig8_csi_error",
    "custom",
)
SCHEME_NAMES = ("centralized", "centralized_step1", "distributed", "sginr", "ne", "nbs", "sumrate_opt")
ROW_COLUMNS = (
    "drop", "seed", "scheme", "snr_db", "worst_rate", "sum_rate", "gamma", "iterations",
    "scalars", "phi", "eta_min", "clipped_flag", "error",
)
DEFAULT_SNRS = (0.0, 5.0, 10.0, 15.0, 20.0)

PRESETS = {
    "fig1_boundary": {"M": 4, "K": 2, "B": 2, "snr_db": [15.0], "drops": 20,
                      "schemes": ["centralized", "distributed", "sginr", "ne", "nbs"]},
    "fig3_phi_cdf": {"M": 4, "K": 3, "B": 3, "snr_db": [10.0], "schemes": ["distributed"]},
    "fig4_worst_rate": {"M": 4, "K": 3, "B": 3, "schemes": ["centralized", "distributed", "sginr", "nbs", "ne"]},
    "fig5_worst_cdf": {"M": 4, "K": 3, "B": 3, "snr_db": [10.0],
                       "schemes": ["centralized", "distributed", "sginr", "nbs", "ne"]},
    "fig6_sumrate_cdf": {"M": 4, "K": 3, "B": 3, "snr_db": [10.0],
                         "schemes": ["sumrate_opt", "centralized", "distributed", "sginr", "nbs", "ne"]},
    "fig7_quantization": {"M": 4, "K": 3, "B": 3,
                          "schemes": ["distributed:iters=2", "distributed:iters=2,bits=2",
                                      "distributed:iters=2,bits=3", "distributed:iters=2,bits=4"]},
    "fig8_csi_error": {"M": 4, "K": 3, "B": 3,
                       "schemes": ["distributed:iters=2", "distributed:iters=2,csi=0.05",
                                   "distributed:iters=2,csi=0.1", "distributed:iters=2,csi=0.2", "sginr"]},
    "custom": {},
}


def parse_scheme(label):
    """'distributed:iters=2,bits=3' -> ('distributed', {'iters': 2, 'bits': 3})."""
    name, _, rest = label.partition(":")
    name = name.strip()
    if name not in SCHEME_NAMES:
        raise ValueError(f"unknown scheme {name!r}; choose from {SCHEME_NAMES}")
    opts = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, sep, val = item.partition("=")
        if not sep:
            raise ValueError(f"scheme option {item!r} must be key=value")
        try:
            num = float(val)
            opts[key.strip()] = int(num) if num.is_integer() and "." not in val else num
        except ValueError:
            opts[key.strip()] = val.strip()
    return name, opts


@dataclass
class ExperimentSpec:
    experiment: str = "custom"
    M: int = 4
    K: int = 3
    B: int = 3
    snr_db: list = field(default_factory=lambda: list(DEFAULT_SNRS))
    drops: int = 500
    schemes: list = field(default_factory=lambda: ["centralized", "distributed", "sginr"])
    seed: int = 0
    out_dir: str = None
    plot: bool = False
    boundary_resolution: int = 100
    distributed: dict = field(default_factory=dict)
    topology: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.drops < 1:
            raise ValueError("drops must be >= 1")
        if not self.schemes:
            raise ValueError("schemes must be nonempty")
        if self.K < self.B or self.K % self.B:
            raise ValueError("K must be a positive multiple of B")
        for s in self.schemes:
            parse_scheme(s)
        self.snr_db = [float(s) for s in np.atleast_1d(self.snr_db)]

    @classmethod
    def from_mapping(cls, data):
        """Flat keys; 'distributed.x' and 'topology.x' keys go to the nested option maps."""
        data = dict(data)
        exp = data.get("experiment", "custom")
        merged = dict(PRESETS.get(exp, {}))
        dist, topo, plain = {}, {}, {}
        for key, val in data.items():
            if key.startswith("distributed."):
                dist[key.split(".", 1)[1]] = val
            elif key.startswith("topology."):
                topo[key.split(".", 1)[1]] = val
            elif key == "out":
                plain["out_dir"] = val
            else:
                plain[key] = val
        merged.update(plain)
        merged["distributed"] = {**merged.get("distributed", {}), **dist}
        merged["topology"] = {**merged.get("topology", {}), **topo}
        return cls(**merged)

    @classmethod
    def from_file(cls, path):
        return cls.from_mapping(load_config(path))

    def topology_config(self):
        return TopologyConfig(n_bs=self.B, antennas=self.M, users_per_bs=self.K // self.B, **self.topology)

    def distributed_config(self, opts):
        base = dict(self.distributed)
        kw = {}
        eps = opts.get("eps", base.get("eps"))
        if eps is not None:
            kw["eps_rel"] = float(eps)
        for key, attr in (("max_iters", "max_iters"), ("fixed_iters", "fixed_iters"), ("quant_bits", "quant_bits"),
                          ("init", "init")):
            if key in base and base[key] is not None:
                kw[attr] = base[key]
        if "iters" in opts:
            kw["fixed_iters"] = int(opts["iters"])
        if "bits" in opts:
            kw["quant_bits"] = int(opts["bits"])
        if "init" in opts:
            kw["init"] = opts["init"]
        return distributed.DistributedConfig(**kw)


# ---------------------------------------------------------------- metrics


def worst_user_rate(rates):
    r = rates.rates if isinstance(rates, baselines.RatePoint) else np.asarray(rates, dtype=float)
    return float(np.min(r))


def sum_rate_ratio(rates, reference):
    r = rates.rates if isinstance(rates, baselines.RatePoint) else np.asarray(rates, dtype=float)
    ref = reference.rates if isinstance(reference, baselines.RatePoint) else np.asarray(reference, dtype=float)
    total = float(np.sum(ref))
    if total <= 0:
        raise ZeroReference("reference sum rate must be positive")
    return float(np.sum(r)) / total


def empirical_cdf(samples):
    """Right-continuous empirical CDF at the distinct sample values."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise EmptySamples("empirical CDF needs at least one sample")
    vals, idx = np.unique(x, return_index=True)
    counts = np.append(idx[1:], x.size)
    return [(float(v), float(c) / x.size) for v, c in zip(vals, counts)]


def cdf_at(samples, threshold):
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise EmptySamples("no samples")
    return float(np.mean(x <= threshold))


@dataclass
class GroupMetrics:
    scheme: str
    snr_db: float
    worst_rates: np.ndarray
    sum_rates: np.ndarray
    iterations: np.ndarray
    scalars: np.ndarray
    phi: np.ndarray
    errors: int
    sum_rate_ratios: np.ndarray = None

    @property
    def drops_ok(self):
        return len(self.worst_rates)

    def mean(self, attr):
        x = getattr(self, attr)
        return float(np.mean(x)) if x is not None and len(x) else math.nan


@dataclass
class MetricsTable:
    groups: dict
    rows: list

    @classmethod
    def from_rows(cls, rows, schemes, snrs):
        groups = {}
        reference = {}
        for r in rows:
            if r["scheme"].split(":")[0] == "sumrate_opt" and not r["error"]:
                reference[(r["drop"], r["snr_db"])] = r["sum_rate"]
        for s in schemes:
            for snr in snrs:
                sel = [r for r in rows if r["scheme"] == s and r["snr_db"] == snr]
                ok = [r for r in sel if not r["error"]]
                ratios = None
                if reference:
                    ratios = np.array([r["sum_rate"] / reference[(r["drop"], snr)] for r in ok
                                       if reference.get((r["drop"], snr), 0) > 0])
                groups[(s, snr)] = GroupMetrics(
                    scheme=s,
                    snr_db=snr,
                    worst_rates=np.sort([r["worst_rate"] for r in ok]),
                    sum_rates=np.sort([r["sum_rate"] for r in ok]),
                    iterations=np.array([r["iterations"] for r in ok], dtype=float),
                    scalars=np.array([r["scalars"] for r in ok], dtype=float),
                    phi=np.sort([r["phi"] for r in ok if not math.isnan(r["phi"])]),
                    errors=len(sel) - len(ok),
                    sum_rate_ratios=None if ratios is None else np.sort(ratios),
                )
        return cls(groups, rows)

    def __getitem__(self, key):
        scheme, snr = key
        return self.groups[(scheme, float(snr))]

    @property
    def error_count(self):
        return sum(g.errors for g in self.groups.values())

    def summary_rows(self):
        out = []
        for (s, snr), g in self.groups.items():
            phi = g.phi
            out.append({
                "scheme": s, "snr_db": snr, "drops_ok": g.drops_ok, "errors": g.errors,
                "mean_worst_rate": g.mean("worst_rates"), "mean_sum_rate": g.mean("sum_rates"),
                "mean_iterations": g.mean("iterations"), "mean_scalars": g.mean("scalars"),
                "p_phi_le_0": cdf_at(phi, 0.0) if len(phi) else math.nan,
                "p_phi_le_0.03": cdf_at(phi, 0.03) if len(phi) else math.nan,
                "mean_sum_rate_ratio": g.mean("sum_rate_ratios"),
            })
        return out


# ---------------------------------------------------------------- per-drop work


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _eta_min(ch, f, gamma):
    try:
        return float(np.min(diag_dominance(ch, f, gamma)))
    except (CoordBeamError, ValueError):
        return math.nan


def _row(drop_idx, seed, label, snr, rates=None, gamma=math.nan, iterations=0, scalars=0, phi=math.nan,
         eta_min=math.nan, clipped=0, error=""):
    return {
        "drop": drop_idx, "seed": seed, "scheme": label, "snr_db": snr,
        "worst_rate": math.nan if rates is None else float(np.min(rates)),
        "sum_rate": math.nan if rates is None else float(np.sum(rates)),
        "gamma": float(gamma), "iterations": int(iterations), "scalars": int(scalars), "phi": float(phi),
        "eta_min": float(eta_min), "clipped_flag": int(clipped), "error": error,
    }


def _solve(spec, label, drop, ch, snr, cache):
    name, opts = parse_scheme(label)
    K, B, M = ch.K, ch.B, ch.M
    if name in ("centralized", "centralized_step1"):
        step1 = cache.get(("step1", snr))
        if step1 is None:
            step1 = cache[("step1", snr)] = centralized.solve_max_min(ch)
        out = step1 if name == "centralized_step1" else centralized.pareto_improve(ch, step1)
        rates = user_rate(downlink_sinr(ch, out.beamformers, out.powers))
        return dict(rates=rates, gamma=step1.gamma, iterations=step1.iterations, scalars=4 * M * K * (B - 1),
                    eta_min=_eta_min(ch, step1.beamformers, step1.gamma))
    if name == "distributed":
        cfg = spec.distributed_config(opts)
        nominal = ch
        radius = float(opts.get("csi", 0.0))
        if radius > 0:
            noisy = perturb_csi(drop, CsiErrorConfig(radius), drop_seed(drop.rng_seed, 1))
            nominal = noisy.channel_set(snr)
        up = distributed.run_to_convergence(nominal, cfg)
        out = distributed.finalize_downlink(nominal, up)
        rates = user_rate(downlink_sinr(ch, out.beamformers, out.powers))
        return dict(rates=rates, gamma=up.gamma, iterations=up.iterations, scalars=out.backhaul_scalars,
                    phi=out.info["phi"], eta_min=_eta_min(nominal, up.beamformers, up.gamma),
                    clipped=int(out.info["clipped"]), converged=up.converged)
    if name == "sginr":
        f, p = baselines.sginr_solution(ch, opts.get("weight"))
        return dict(rates=user_rate(downlink_sinr(ch, f, p)))
    if name == "ne":
        f, p = baselines.ne_solution(ch)
        return dict(rates=user_rate(downlink_sinr(ch, f, p)))
    if name == "nbs":
        pt = cache.get(("nbs", snr))
        if pt is None:
            pt = cache[("nbs", snr)] = baselines.nbs_solution(ch)[2]
        return dict(rates=pt.rates, iterations=pt.info.get("iterations", 0))
    if name == "sumrate_opt":
        if K == 2 and B == 2 and M >= 1:
            pt = baselines.boundary_max_sum(ch, spec.boundary_resolution)
            return dict(rates=pt.rates)
        # best-of-schemes proxy when no exact search is available
        best = None
        for other in ("centralized", "distributed", "sginr", "ne"):
            r = _solve(spec, other, drop, ch, snr, cache)["rates"]
            if best is None or r.sum() > best.sum():
                best = r
        if any(parse_scheme(s)[0] == "nbs" for s in spec.schemes):
            r = _solve(spec, "nbs", drop, ch, snr, cache)["rates"]
            if r.sum() > best.sum():
                best = r
        return dict(rates=best)
    raise ValueError(f"unknown scheme {name}")


def run_drop(spec, drop_idx):
    """All (SNR, scheme) rows of one drop, in deterministic order."""
    seed = drop_seed(spec.seed, drop_idx)
    rows = []
    extras = {}
    try:
        drop = generate_drop(spec.topology_config(), seed)
    except Exception as exc:  # geometry failure: every row of the drop is an error
        msg = f"{type(exc).__name__}: {exc}"
        return [_row(drop_idx, seed, s, snr, error=msg) for snr in spec.snr_db for s in spec.schemes], extras
    for snr in spec.snr_db:
        ch = drop.channel_set(snr)
        cache = {}
        for label in spec.schemes:
            try:
                res = _solve(spec, label, drop, ch, snr, cache)
            except (CoordBeamError, ValueError, np.linalg.LinAlgError, ArithmeticError) as exc:
                rows.append(_row(drop_idx, seed, label, snr, error=f"{type(exc).__name__}: {exc}".replace("\n", " ")))
                continue
            res.pop("converged", None)
            rows.append(_row(drop_idx, seed, label, snr, **res))
        if spec.experiment == "fig1_boundary" and ch.K == 2 and ch.B == 2:
            extras[("boundary", snr)] = [pt.rates.tolist() for pt in
                                         baselines.pareto_boundary_2user(ch, spec.boundary_resolution)]
    return rows, extras


def _run_drop_star(args):
    return run_drop(*args)


def _thread_count():
    try:
        return max(1, int(os.environ.get("COORDBEAM_THREADS", "1")))
    except ValueError:
        return 1


def run_experiment(spec, write=True):
    """Run every drop, aggregate, and (when ``spec.out_dir`` is set) write the CSV files.

    Returns (MetricsTable, extras) where extras maps (drop, kind, snr) to
    auxiliary per-drop data such as boundary staircases.
    """
    jobs = [(spec, i) for i in range(spec.drops)]
    workers = _thread_count()
    if workers > 1 and spec.drops > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_drop_star, jobs))
    else:
        results = [run_drop(*j) for j in jobs]
    rows = [r for res, _ in results for r in res]
    extras = {(i, *key): val for i, (_, ex) in enumerate(results) for key, val in ex.items()}
    table = MetricsTable.from_rows(rows, spec.schemes, spec.snr_db)
    if write and spec.out_dir:
        write_outputs(spec, table, extras)
    return table, extras


# ---------------------------------------------------------------- output


def rows_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROW_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in ROW_COLUMNS])
    return buf.getvalue()


def _write_csv(path, header, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for rec in records:
            w.writerow([_fmt(v) for v in rec])


def write_outputs(spec, table, extras):
    out = spec.out_dir
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "rows.csv"), "w", newline="") as fh:
        fh.write(rows_csv(table.rows))
    summary = table.summary_rows()
    if summary:
        header = list(summary[0])
        _write_csv(os.path.join(out, "summary.csv"), header, [[s[h] for h in header] for s in summary])
    for attr, fname in (("worst_rates", "cdf_worst_rate.csv"), ("phi", "cdf_phi.csv"),
                        ("sum_rate_ratios", "cdf_sum_rate_ratio.csv")):
        recs = []
        for (s, snr), g in table.groups.items():
            x = getattr(g, attr)
            if x is not None and len(x):
                recs.extend([s, snr, v, p] for v, p in empirical_cdf(x))
        if recs:
            _write_csv(os.path.join(out, fname), ["scheme", "snr_db", "value", "probability"], recs)
    boundary = [(k, v) for k, v in extras.items() if k[1] == "boundary"]
    if boundary:
        recs = [[drop, snr, r1, r2] for (drop, _, snr), pts in sorted(boundary) for r1, r2 in pts]
        _write_csv(os.path.join(out, "boundary.csv"), ["drop", "snr_db", "r1", "r2"], recs)
    if spec.plot:
        write_plots(spec, table)


def write_plots(spec, table):
    """SVG line plot of mean worst-user rate vs SNR and CDF plots (needs matplotlib)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "coordbeam"
    schemes = list(dict.fromkeys(s for s, _ in table.groups))
    fig, ax = plt.subplots()
    for s in schemes:
        ax.plot(spec.snr_db, [table[s, snr].mean("worst_rates") for snr in spec.snr_db], marker="o", label=s)
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel("mean worst-user rate [bits/s/Hz]")
    ax.legend()
    fig.savefig(os.path.join(spec.out_dir, "worst_rate.svg"), metadata={"Date": None})
    plt.close(fig)
    for attr, fname, xlabel in (("worst_rates", "cdf_worst_rate.svg", "worst-user rate"),
                                ("phi", "cdf_phi.svg", "excess power"),
                                ("sum_rate_ratios", "cdf_sum_rate_ratio.svg", "sum-rate ratio")):
        fig, ax = plt.subplots()
        drawn = False
        for (s, snr), g in table.groups.items():
            x = getattr(g, attr)
            if x is not None and len(x):
                c = np.array(empirical_cdf(x))
                ax.step(c[:, 0], c[:, 1], where="post", label=f"{s} @ {snr:g} dB")
                drawn = True
        if drawn:
            ax.set_xlabel(xlabel)
            ax.set_ylabel("CDF")
            ax.legend()
            fig.savefig(os.path.join(spec.out_dir, fname), metadata={"Date": None})
        plt.close(fig)
