"""Command line: ``coordbeam run | boundary | trace``."""

import argparse
import json
import sys

from . import baselines, distributed
from .harness import ExperimentSpec, run_experiment
from .scenario import DropScenario, load_config
from .system_model import ChannelSet


def load_instance(path, snr_db=None):
    """A ChannelSet from a JSON fixture.

    Accepted layouts: a ChannelSet record, {"channel": record}, or
    {"drop": DropScenario record, "snr_db": value}.
    """
    with open(path) as fh:
        rec = json.load(fh)
    if "drop" in rec:
        snr = rec.get("snr_db") if snr_db is None else snr_db
        return DropScenario.from_record(rec["drop"]).channel_set(snr)
    return ChannelSet.from_record(rec.get("channel", rec))


def _cmd_run(args):
    data = dict(load_config(args.spec))
    if args.drops is not None:
        data["drops"] = args.drops
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out is not None:
        data["out"] = args.out
    if args.plot:
        data["plot"] = True
    spec = ExperimentSpec.from_mapping(data)
    table, _ = run_experiment(spec)
    for s in table.summary_rows():
        print(f"{s['scheme']:<32} snr={s['snr_db']:>5g} dB  worst={s['mean_worst_rate']:.4f}  "
              f"sum={s['mean_sum_rate']:.4f}  ok={s['drops_ok']}  errors={s['errors']}")
    if table.error_count:
        print(f"{table.error_count} per-drop solver failures:", file=sys.stderr)
        for r in table.rows:
            if r["error"]:
                print(f"  drop {r['drop']} {r['scheme']} @ {r['snr_db']:g} dB: {r['error']}", file=sys.stderr)
        return 2
    return 0


def _cmd_boundary(args):
    ch = load_instance(args.instance, args.snr_db)
    pts = baselines.pareto_boundary_2user(ch, args.resolution)
    if args.out:
        baselines.export_boundary_csv(pts, args.out)
    else:
        print("r1,r2")
        for pt in pts:
            print(f"{pt.rates[0]!r},{pt.rates[1]!r}")
    return 0


def _cmd_trace(args):
    ch = load_instance(args.instance, args.snr_db)
    cfg = distributed.DistributedConfig(fixed_iters=args.iters, quant_bits=args.bits, init=args.init, seed=args.seed)
    out = distributed.run_to_convergence(ch, cfg)
    if args.out:
        distributed.export_trace_csv(out, args.out)
    else:
        distributed.export_trace_csv(out, sys.stdout)
    return 0 if out.converged else 2


def build_parser():
    p = argparse.ArgumentParser(prog="coordbeam", description="Coordinated multicell beamforming simulator")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a Monte-Carlo experiment from a spec file")
    r.add_argument("--spec", required=True)
    r.add_argument("--drops", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--plot", action="store_true", help="also write SVG plots (needs matplotlib)")
    r.set_defaults(func=_cmd_run)

    b = sub.add_parser("boundary", help="two-user Pareto boundary of a fixture as CSV")
    b.add_argument("--instance", required=True)
    b.add_argument("--resolution", type=int, default=100)
    b.add_argument("--snr-db", type=float)
    b.add_argument("--out")
    b.set_defaults(func=_cmd_boundary)

    t = sub.add_parser("trace", help="round trace of the distributed algorithm on a fixture")
    t.add_argument("--instance", required=True)
    t.add_argument("--iters", type=int, help="run exactly this many rounds")
    t.add_argument("--bits", type=int, default=0, help="quantizer bits for exchanged powers (0 = exact)")
    t.add_argument("--init", choices=("zeros", "random"), default="zeros")
    t.add_argument("--seed", type=int)
    t.add_argument("--snr-db", type=float)
    t.add_argument("--out")
    t.set_defaults(func=_cmd_trace)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
