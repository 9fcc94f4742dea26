"""Empirical null sizes of the sign-based tests over Gaussian and t4 data.

    python scripts/size_battery.py --reps 2000
"""

from __future__ import annotations

import argparse
import time
import warnings

import numpy as np

from ellipstat.elliptical import EllipticalSpec, sample_elliptical
from ellipstat.location_tests import inst_test, one_sample_sign_test, sst_two_sample
from ellipstat.matrix_tests import sphericity_sign_test, sscm_equality_test


def draw(family, n, p, seed):
    kw = {"nu": 4.0} if family == "student" else {}
    return sample_elliptical(EllipticalSpec.spherical(family, p, **kw), n, seed)


DESIGNS = {
    "one_sample_sign": lambda f, s: one_sample_sign_test(draw(f, 60, 50, s)),
    "inst": lambda f, s: inst_test(draw(f, 60, 50, s)),
    "sst_two_sample": lambda f, s: sst_two_sample(draw(f, 50, 80, s), draw(f, 50, 80, s + 1)),
    "sphericity_sign": lambda f, s: sphericity_sign_test(draw(f, 60, 40, s)),
    "sscm_equality": lambda f, s: sscm_equality_test(draw(f, 50, 40, s), draw(f, 50, 40, s + 1)),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=500)
    ap.add_argument("--alpha", type=float, default=0.05)
    ap.add_argument("--tests", nargs="*", default=list(DESIGNS))
    args = ap.parse_args()
    warnings.simplefilter("ignore")
    print(f"{'test':<18}{'family':<10}{'size':>8}{'se':>8}{'mean z':>9}{'sd z':>8}{'secs':>7}")
    for j, name in enumerate(args.tests):
        for k, fam in enumerate(("gaussian", "student")):
            t0 = time.perf_counter()
            base = 10**6 * (2 * j + k + 1)
            res = [DESIGNS[name](fam, base + 2 * r) for r in range(args.reps)]
            pv = np.array([r.pvalue for r in res])
            z = np.array([r.statistic for r in res])
            size = float(np.mean(pv <= args.alpha))
            se = np.sqrt(size * (1 - size) / args.reps)
            print(f"{name:<18}{fam:<10}{size:8.4f}{se:8.4f}{z.mean():9.3f}{z.std():8.3f}{time.perf_counter() - t0:7.1f}",
                  flush=True)


if __name__ == "__main__":
    main()
