"""Fitted Rabi frequency against sqrt(P) for the 104.5 MHz device drive.

Runs in the weak-damping configuration, prints the table and the linear
regression, and writes rabi_power.csv into --out.
"""

import argparse
from pathlib import Path

import numpy as np

from hodsar.config import load_config
from hodsar.dynamics import TripletRateParams
from hodsar.experiment import rabi_power_sweep
from hodsar.output import write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("rabi_out"))
    ap.add_argument("--p-min", type=float, default=1.0, help="mW")
    ap.add_argument("--p-max", type=float, default=10.0, help="mW")
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--damping", type=float, default=1e-4, help="relaxation rates, 1/us")
    args = ap.parse_args()

    cfg = load_config("preset: device-104p5\n")
    w = args.damping
    rates = TripletRateParams(gamma_xy=w, gamma_xz=w, gamma_yz=w, k_x=w, k_y=w, k_z=w)
    powers = np.geomspace(args.p_min, args.p_max, args.n)
    res = rabi_power_sweep(powers, 104.5, cfg.zfs, cfg.couplings, rates, cfg.modes, cfg.calib,
                           np.arange(0, 4.0 + 1e-9, 0.01))
    print(f"{'P (mW)':>9} {'sqrt P':>8} {'model':>9} {'fit':>9}")
    for r in res.rows:
        print(f"{r.power_mw:9.4f} {r.sqrt_power:8.4f} {r.omega_model:9.5f} {r.omega_fit:9.5f}")
    print(f"slope {res.slope:.6g} MHz/sqrt(mW)  intercept {res.intercept:.3g} MHz  R^2 {res.r_squared:.8f}")
    write_csv(args.out / "rabi_power.csv", {
        "power_mw": [r.power_mw for r in res.rows],
        "omega_model_mhz": [r.omega_model for r in res.rows],
        "omega_fit_mhz": [r.omega_fit for r in res.rows],
    })


if __name__ == "__main__":
    main()
