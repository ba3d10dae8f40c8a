"""Regenerate the bundled bladder-style stand-in dataset.

The original bladder-recurrence records (118 subjects, three arms) are not
redistributable from this environment, so the package ships a synthetic
stand-in with the same shape: arm sizes 48/32/38, follow-up 12..64 months,
integer-month gap times, up to nine recurrences, interval-level tumour
count/size covariates, and status codes 0..3 (0 censored, 1 recurrence,
2 death from bladder disease, 3 death from another cause).

Records are drawn from the frailty model itself at the published-analysis
parameter values (beta = (13.849, -14.196) on covariates/100, tau = 1.793)
with first-recurrence baselines that cross between placebo and pyridoxine
and second-recurrence baselines that do not.  The seed below is fixed so the
bundled CSV is reproducible; rerunning this script rewrites it byte for byte.

Usage: python scripts/make_bundled_bladder.py [--check]
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from gsfm.simgen import MixtureBaseline, mixture_inverse_surv, mixture_surv  # noqa: E402

SEED = 20260810
ARMS = {1: ("placebo", 48), 2: ("pyridoxine", 32), 3: ("thiotepa", 38)}
BETA = (13.849, -14.196)  # on covariates already divided by 100
TAU = 1.793

# Baseline survival functions in years.  k=1 curves cross (pyridoxine falls
# faster early, flattens later); k=2 curves keep a fixed order.
BASELINES = {
    (1, 1): MixtureBaseline(((0.5, -0.7, 0.8), (0.5, 0.9, 1.0))),
    (1, 2): MixtureBaseline(((0.5, -1.3, 0.6), (0.5, 1.5, 0.9))),
    (1, 3): MixtureBaseline(((1.0, 0.5, 1.2),)),
    (2, 1): MixtureBaseline(((1.0, 0.3, 1.0),)),
    (2, 2): MixtureBaseline(((1.0, -0.1, 1.0),)),
    (2, 3): MixtureBaseline(((1.0, 0.8, 1.0),)),
}
MAX_RECURRENCES = 9


def _interval_covariates(rng, count, size):
    """Tumour count/size at the next interval start: small random drift."""
    count = int(np.clip(count + rng.choice([-1, 0, 0, 1, 2]), 1, 8))
    size = int(np.clip(size + rng.choice([-1, 0, 0, 0, 1]), 1, 7))
    return count, size


def generate(seed: int = SEED):
    rng = np.random.default_rng(seed)
    rows = []
    subject = 0
    for stratum, (_, n_arm) in ARMS.items():
        for _ in range(n_arm):
            subject += 1
            followup = int(rng.integers(12, 65))
            count = int(rng.choice(np.arange(1, 9), p=_count_probs))
            size = int(rng.choice(np.arange(1, 8), p=_size_probs))
            v = TAU * rng.standard_normal()
            elapsed = 0
            sub_rows = []
            for k in range(1, MAX_RECURRENCES + 1):
                baseline = BASELINES[(min(k, 2), stratum)]
                eta = np.exp(BETA[0] * count / 100 + BETA[1] * size / 100 + v)
                u = rng.uniform()
                gap_years = mixture_inverse_surv(u ** (1.0 / eta), baseline)
                gap_months = max(1, int(round(gap_years * 12.0)))
                remaining = followup - elapsed
                if remaining < 1:
                    break
                if gap_months <= remaining:
                    sub_rows.append([subject, k, stratum, gap_months, 1, count, size])
                    elapsed += gap_months
                    count, size = _interval_covariates(rng, count, size)
                else:
                    sub_rows.append([subject, k, stratum, remaining, 0, count, size])
                    break
            # a final censored interval becomes an other-cause death for some
            # subjects; a final event becomes a bladder-disease death for some
            last = sub_rows[-1]
            if last[4] == 0 and rng.uniform() < 0.12:
                last[4] = 3
            elif last[4] == 1 and rng.uniform() < 0.10:
                last[4] = 2
            rows.extend(sub_rows)
    return rows


# empirical-looking marginal distributions for the two covariates
_count_probs = np.array([0.45, 0.18, 0.12, 0.08, 0.06, 0.05, 0.03, 0.03])
_size_probs = np.array([0.40, 0.20, 0.15, 0.10, 0.07, 0.05, 0.03])


def check_crossing():
    grid = np.linspace(0.05, 5.0, 200)
    s11 = mixture_surv(grid, BASELINES[(1, 1)])
    s12 = mixture_surv(grid, BASELINES[(1, 2)])
    diff = s11 - s12
    assert diff.max() > 0.02 and diff.min() < -0.02, "k=1 truth curves must cross"
    s21 = mixture_surv(grid, BASELINES[(2, 1)])
    s22 = mixture_surv(grid, BASELINES[(2, 2)])
    s23 = mixture_surv(grid, BASELINES[(2, 3)])
    assert np.all(s23 >= s21) and np.all(s21 >= s22), "k=2 truth curves must not cross"


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--check", action="store_true", help="verify, do not write")
    args = parser.parse_args()

    check_crossing()
    rows = generate()
    subjects = {r[0] for r in rows}
    n_events = sum(1 for r in rows if r[4] in (1, 2))
    print(f"{len(subjects)} subjects, {len(rows)} interval records, "
          f"{n_events} events, {len(rows) - n_events} censored")
    per_k = {}
    for r in rows:
        per_k[r[1]] = per_k.get(r[1], 0) + 1
    print("records per recurrence:", dict(sorted(per_k.items())))
    if args.check:
        return

    data_dir = Path(__file__).resolve().parent.parent / "src" / "gsfm" / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    with open(data_dir / "bladder_standin.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["subject", "recurrence", "stratum", "time", "status", "z1", "z2"])
        writer.writerows(rows)
    with open(data_dir / "bladder_strata.json", "w", encoding="utf-8") as fh:
        json.dump({str(j): name for j, (name, _) in ARMS.items()}, fh, indent=2)
        fh.write("\n")
    print(f"wrote {data_dir / 'bladder_standin.csv'}")


if __name__ == "__main__":
    main()
