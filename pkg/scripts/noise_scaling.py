"""Noise-power scaling of the fitted decoherence strength.

Runs Monte Carlo ensembles at several injected-noise amplitudes on a fixed
duration grid, fits the overall noise scale against the unit-amplitude
template, and reports the log-log slope (2 for power scaling quadratic in
the amplitude knob).

Usage:
    python scripts/noise_scaling.py [--realizations 1000] [--out results/scaling]
"""

import argparse
import csv
import json
import math
import os

import numpy as np

from ddsim.analysis import scaling_study
from ddsim.noise import OhmicHardCutoff
from ddsim.sequences import SequenceFamily

TWO_PI = 2.0 * math.pi


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="results/scaling")
    parser.add_argument("--amplitudes", default="0.1,0.2,0.5,1,2")
    parser.add_argument("--realizations", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--mode", choices=["analytic", "montecarlo"], default="montecarlo")
    args = parser.parse_args()
    os.makedirs(args.out, exist_ok=True)

    amplitudes = [float(v) for v in args.amplitudes.split(",")]
    model = OhmicHardCutoff(slope_amplitude=0.2, cutoff=TWO_PI * 500.0)
    family = SequenceFamily("udd", 4, 0.0)
    taus = np.geomspace(3e-3, 0.4, 10)
    result = scaling_study(
        amplitudes,
        family,
        model,
        mode=args.mode,
        realizations=args.realizations,
        seed=args.seed,
        taus=taus,
    )
    with open(os.path.join(args.out, "scaling.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["amplitude", "alpha", "ratio_to_first", "alpha_uncertainty"])
        for v, a, r, fit in zip(result.amplitudes, result.alphas, result.ratios, result.fits):
            writer.writerow([v, a, r, fit.alpha_uncertainty])
    with open(os.path.join(args.out, "scaling.json"), "w") as fh:
        json.dump({"slope": result.slope, "mode": result.mode}, fh, indent=2)
    print("alphas:", np.round(result.alphas, 5))
    print("ratios:", np.round(result.ratios, 3))
    print("log-log slope:", round(result.slope, 4))


if __name__ == "__main__":
    main()
