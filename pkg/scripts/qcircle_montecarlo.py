"""Spread of Q-circle estimates under additive complex noise.

For each noise level, synthesizes a single Lorentzian mode, fits it over
many seeds and prints the median and 95th-percentile relative Q error.
"""

import argparse

import numpy as np

from hodsar.resonator import ResonatorMode, ResonatorModeSet, SParamRecord, qcircle_fit, synth_s21_modesum


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--f0", type=float, default=104.8)
    ap.add_argument("--q", type=float, default=8505.2)
    ap.add_argument("--noise", type=float, nargs="+", default=[1e-4, 1e-3, 3e-3, 1e-2])
    ap.add_argument("--seeds", type=int, default=200)
    ap.add_argument("--points", type=int, default=200)
    args = ap.parse_args()

    hw = args.f0 / args.q / 2
    f = np.linspace(args.f0 - 5 * hw, args.f0 + 5 * hw, args.points)
    clean = synth_s21_modesum(ResonatorModeSet((ResonatorMode(args.f0, args.q),)), f).s21
    print(f"{'noise':>8} {'median':>10} {'p95':>10}")
    for sigma in args.noise:
        errs = []
        for seed in range(args.seeds):
            rng = np.random.default_rng(seed)
            z = clean + sigma * (rng.normal(size=f.size) + 1j * rng.normal(size=f.size))
            errs.append(abs(qcircle_fit(SParamRecord(f, z)).q_loaded / args.q - 1))
        print(f"{sigma:8.1e} {np.median(errs):10.3e} {np.percentile(errs, 95):10.3e}")


if __name__ == "__main__":
    main()
