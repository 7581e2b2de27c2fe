"""Sequence comparison under high-frequency and low-frequency noise.

Emits the error-probability curves of UDD vs multipulse echo over a log
duration grid for an Ohmic hard-cutoff spectrum at two noise powers, plus
the 1/e coherence times under an ambient 1/omega^4 spectrum with a 153 Hz
spur. All outputs are plot-ready CSV/JSON.

Usage:
    python scripts/crossover_study.py [--out results/crossover]
"""

import argparse
import json
import math
import os

import numpy as np

from ddsim.analysis import compare_sequences, write_comparison_csv, write_comparison_summary
from ddsim.coherence import tau_for_target_w
from ddsim.noise import Ambient, OhmicHardCutoff, Spur, with_noise_scale
from ddsim.sequences import SequenceFamily

TWO_PI = 2.0 * math.pi


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="results/crossover")
    parser.add_argument("--n-list", default="2,4,6,8,10")
    parser.add_argument("--cutoff-hz", type=float, default=500.0)
    parser.add_argument("--amplitude", type=float, default=2.0)
    args = parser.parse_args()
    os.makedirs(args.out, exist_ok=True)
    n_list = [int(v) for v in args.n_list.split(",")]

    taus = np.geomspace(5e-4, 0.1, 60)
    high = OhmicHardCutoff(slope_amplitude=args.amplitude, cutoff=TWO_PI * args.cutoff_hz)
    for tag, model in (("high", high), ("low", with_noise_scale(high, 0.1))):
        report = compare_sequences(["udd", "cpmg"], n_list, model, taus)
        write_comparison_csv(os.path.join(args.out, f"ohmic_{tag}.csv"), report)
        write_comparison_summary(os.path.join(args.out, f"ohmic_{tag}.json"), report)
        print(f"ohmic {tag}: crossovers {report.crossovers}")

    ambient = Ambient(alpha=0.0061, spurs=(Spur(center=TWO_PI * 153.0, weight=0.15),))
    times = {}
    for kind in ("cpmg", "udd"):
        fam = SequenceFamily(kind, 6, 0.0)
        times[kind] = tau_for_target_w(fam, ambient, math.exp(-1.0), tau_hi=1.0, rel_tol=1e-4)
    with open(os.path.join(args.out, "ambient_1e_times.json"), "w") as fh:
        json.dump({k: v for k, v in times.items()}, fh, indent=2)
    print("ambient 1/e times:", times)


if __name__ == "__main__":
    main()
