"""Write the synthetic example panel used by the README and CLI tests.

Four categories observed yearly 1997-2007, redesign in 2005, two domains
with population shares 0.49 and 0.51. The total is the share-weighted sum
of the domain estimates.
"""

import argparse
import csv
import os

import numpy as np

YEARS = list(range(1997, 2008))
SIZES = [4520, 4310, 4780, 4150, 4630, 4410, 4270, 4090, 4460, 4550, 4380]
SHARES = (0.49, 0.51)
DELTA = (4.5, -0.1, -3.0, -1.4)


def base_path(shift=0.0):
    t = np.arange(len(YEARS))
    return np.column_stack([37 - 0.2 * t + shift, 14 + 0 * t, 33 + 0.1 * t - shift, 16 + 0.1 * t])


def write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    ap.add_argument("--seed", type=int, default=2009)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    os.makedirs(args.out, exist_ok=True)
    TR = YEARS.index(2005)
    cats = [f"cat_{k + 1}" for k in range(4)]
    doms = []
    for h, shift in enumerate((-2.0, 2.0)):
        p = base_path(shift)
        p[TR:] += DELTA
        n = np.round(np.array(SIZES) * SHARES[h]).astype(int)
        counts = np.array([rng.multinomial(n[t], p[t] / p[t].sum()) for t in range(len(YEARS))])
        doms.append((counts / n[:, None] * 100, n))
    total = sum(f * d[0] for f, d in zip(SHARES, doms))
    n_tot = sum(d[1] for d in doms)
    sets = [("total", total, n_tot)] + [(f"domain{h + 1}", d[0], d[1]) for h, d in enumerate(doms)]
    for name, vals, n in sets:
        vals = vals / vals.sum(axis=1, keepdims=True) * 100
        write(os.path.join(args.out, f"{name}_series.csv"), ["period"] + cats,
              [[y] + [format(v, ".17g") for v in row] for y, row in zip(YEARS, vals)])
        write(os.path.join(args.out, f"{name}_sizes.csv"), ["period", "n"], [[y, int(m)] for y, m in zip(YEARS, n)])
        se = np.sqrt(vals * (100 - vals) / n[:, None])
        write(os.path.join(args.out, f"{name}_se.csv"), ["period"] + cats,
              [[y] + [format(v, ".17g") for v in row] for y, row in zip(YEARS, se)])


if __name__ == "__main__":
    main()
