"""Run the Monte Carlo scenarios in scenarios/ and tabulate the results.

    python scripts/run_studies.py --replicates 2000 --workers 4
    python scripts/run_studies.py trend_T11 multinomial_constant --replicates 200

Writes one JSON summary per scenario to results/ and prints a table of
true value, resample mean, resample SD and Monte Carlo SE per parameter.
"""

import argparse
import glob
import json
import os
import time

from surveybreaks.cli import load_scenario, summary_report
from surveybreaks.simulation import run_study

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def show(rep, seconds):
    print(f"\n{rep['scenario']}: {rep['converged']}/{rep['replicates']} replicates kept, "
          f"{rep['failures']} failed, max gradient norm {rep['max_gradient_norm']:.2e}, {seconds:.0f}s")
    print(f"  {'parameter':<16} {'true':>9} {'mean':>9} {'sd':>9} {'mc se':>9}")
    for p in rep["parameters"]:
        sd = p["sd"] if p["sd"] is not None else float("nan")
        se = p["mc_se"] if p["mc_se"] is not None else float("nan")
        print(f"  {p['name']:<16} {p['true']:>9.4f} {p['mean']:>9.4f} {sd:>9.4f} {se:>9.4f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("names", nargs="*", help="scenario names (default: all)")
    ap.add_argument("--replicates", type=int, default=2000)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default=os.path.join(ROOT, "results"))
    args = ap.parse_args()

    paths = sorted(glob.glob(os.path.join(ROOT, "scenarios", "*.json")))
    if args.names:
        paths = [p for p in paths if os.path.splitext(os.path.basename(p))[0] in args.names]
    os.makedirs(args.out, exist_ok=True)
    for path in paths:
        sc = load_scenario(path)
        t0 = time.time()
        summary = run_study(sc, replicates=args.replicates, workers=args.workers)
        rep = summary_report(summary)
        with open(os.path.join(args.out, f"{sc.name}.json"), "w") as fh:
            json.dump(rep, fh, indent=1)
        show(rep, time.time() - t0)


if __name__ == "__main__":
    main()
