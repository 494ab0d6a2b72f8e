#!/usr/bin/env python3
"""Run experiment specs and print their summaries.

    python3 scripts/run_all.py                  # every spec in scripts/specs
    python3 scripts/run_all.py fig7 fig8        # only specs whose name contains a pattern
    python3 scripts/run_all.py --drops 50 quick # override the drop count

Set COORDBEAM_THREADS to run drops in parallel processes.
"""

import argparse
import math
import pathlib
import sys
import time

from coordbeam.harness import ExperimentSpec, run_experiment
from coordbeam.scenario import load_config

SPEC_DIR = pathlib.Path(__file__).resolve().parent / "specs"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("patterns", nargs="*", help="substrings selecting spec files")
    ap.add_argument("--drops", type=int)
    ap.add_argument("--out-root", default=None, help="directory replacing the specs' output root")
    args = ap.parse_args(argv)
    specs = sorted(SPEC_DIR.glob("*.yaml"))
    if args.patterns:
        specs = [p for p in specs if any(pat in p.stem for pat in args.patterns)]
    failures = 0
    for path in specs:
        data = dict(load_config(path))
        if args.drops is not None:
            data["drops"] = args.drops
        if args.out_root is not None:
            data["out"] = str(pathlib.Path(args.out_root) / path.stem)
        spec = ExperimentSpec.from_mapping(data)
        t0 = time.perf_counter()
        table, _ = run_experiment(spec)
        print(f"== {path.stem}: {spec.drops} drops in {time.perf_counter() - t0:.1f}s -> {spec.out_dir}")
        for s in table.summary_rows():
            p03 = s["p_phi_le_0.03"]
            extra = "" if math.isnan(p03) else f"  P(phi<=0.03)={p03:.3f}  P(phi<=0)={s['p_phi_le_0']:.3f}"
            print(f"   {s['scheme']:<32} {s['snr_db']:>5g} dB  worst={s['mean_worst_rate']:.4f}  "
                  f"sum={s['mean_sum_rate']:.4f}  errors={s['errors']}{extra}")
        failures += table.error_count
    return 2 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
