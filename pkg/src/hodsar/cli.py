"""Command-line entry point: ``hodsar <subcommand> [options]``.

Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
Diagnostics go to stderr; tables go to files under ``--out`` and summaries
to stdout.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, db_sweep, load_config
from .constants import dbm_to_mw
from .dynamics import damped_cosine, fit_rabi, rabi_trace
from .errors import DataError, NumericalError
from .experiment import (
    EnergyBudget,
    contrast_scaling,
    coupling_eta,
    cw_spectrum,
    drive_matrix_elements,
    estimate_ensemble,
    rabi_frequency,
    rabi_power_sweep,
    shot_noise_snr,
)
from .output import atomic_write, write_csv, write_meta, write_svg
from .resonator import find_modes, qcircle_fit, strain_amplitude, synth_s21_cavity, synth_s21_modesum, unloaded_q
from .touchstone import emit_touchstone, parse_touchstone


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML run configuration")
    p.add_argument("--preset", help="named parameter preset (paper-appendix, device-104p5)")
    p.add_argument("--seed", type=int, help="RNG seed (falls back to $HODSAR_SEED, then the config)")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--format", choices=("csv", "svg", "both"), default="both")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hodsar", description="Acoustically driven triplet spin resonance toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("spectrum", help="CW contrast versus RF frequency")
    _common(p)
    p.add_argument("--power-dbm", type=float)
    p.add_argument("--f-start", type=float)
    p.add_argument("--f-stop", type=float)
    p.add_argument("--f-step", type=float)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("rabi", help="pulsed Rabi trace and damped-cosine fit")
    _common(p)
    p.add_argument("--power-dbm", type=float)
    p.add_argument("--f-drive", type=float, help="RF frequency, MHz (default: the driven transition)")
    p.add_argument("--tau-stop", type=float)
    p.add_argument("--tau-step", type=float)

    p = sub.add_parser("rabi-power", help="Rabi frequency versus sqrt(RF power)")
    _common(p)
    p.add_argument("--f-drive", type=float)
    p.add_argument("--powers-dbm", type=float, nargs="+")

    p = sub.add_parser("s21-fit", help="find resonator modes in a .s2p file and Q-circle fit each")
    _common(p)
    p.add_argument("input", type=Path)
    p.add_argument("--kind", choices=("transmission", "reflection"), default="transmission")

    p = sub.add_parser("synth-s21", help="synthesize resonator S-parameters")
    _common(p)
    p.add_argument("--model", choices=("modesum", "cavity"), default="modesum")
    p.add_argument("--f-start", type=float, default=100.0)
    p.add_argument("--f-stop", type=float, default=110.0)
    p.add_argument("--f-step", type=float, default=0.0005)

    p = sub.add_parser("estimate", help="ensemble size and shot-noise SNR estimates")
    _common(p)
    p.add_argument("--f-t", type=float, help="triplet fraction")
    p.add_argument("--c1", type=float, help="single-molecule contrast")
    p.add_argument("--rate", type=float, help="detected photon rate, counts/s")
    p.add_argument("--time", type=float, help="integration time, s")

    p = sub.add_parser("eta", help="external-magnetic energy fraction of a mode")
    _common(p)
    for name in ("e-ext-mag", "e-int-ela", "e-int-kin", "e-int-ele", "e-int-mag", "e-ext-ele"):
        p.add_argument(f"--{name}", type=float)
    return parser


def _resolve_seed(args) -> int | None:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("HODSAR_SEED")
    if env is None or env == "":
        return None
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"HODSAR_SEED must be an integer, got {env!r}") from None


def _load(args) -> RunConfig:
    text = args.config.read_text() if args.config else ""
    return load_config(text, preset=args.preset, seed=_resolve_seed(args))


def _meta(cfg: RunConfig, command: str, **extra) -> dict:
    return {"command": command, "config_hash": cfg.config_hash, "preset": cfg.preset,
            "seed": cfg.seed, "version": __version__,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"), **extra}


def _emit(args, stem: str, columns: dict, meta: dict, plot=None) -> list[Path]:
    out = []
    if args.format in ("csv", "both"):
        out.append(write_csv(args.out / f"{stem}.csv", columns))
        out.append(write_meta(args.out / f"{stem}.meta.json", meta))
    if plot is not None and args.format in ("svg", "both"):
        out.append(write_svg(args.out / f"{stem}.svg", **plot))
    return out


def _transition(cfg: RunConfig) -> float:
    d = cfg["drive"]
    return float(drive_matrix_elements(cfg.zfs.d, [cfg.zfs.e], cfg.couplings,
                                       cfg.strain_direction, d["pair"])[0][0])


def cmd_spectrum(args, cfg: RunConfig) -> int:
    sw = cfg["sweep"]
    start = sw["f_start"] if args.f_start is None else args.f_start
    stop = sw["f_stop"] if args.f_stop is None else args.f_stop
    step = sw["f_step"] if args.f_step is None else args.f_step
    if not step > 0 or stop < start:
        raise DataError("need f_step > 0 and f_stop >= f_start")
    p_dbm = sw["power_dbm"] if args.power_dbm is None else args.power_dbm
    grid = db_sweep(start, stop, step)
    res = cw_spectrum(cfg.zfs, cfg.couplings, cfg.rates, cfg.modes, cfg.calib, cfg.inhomogeneity,
                      float(dbm_to_mw(p_dbm)), grid, t2=cfg["drive"]["t2"], direction=cfg.strain_direction,
                      pair=cfg["drive"]["pair"], workers=args.workers)
    meta = _meta(cfg, "spectrum", power_dbm=p_dbm, **res.metadata)
    plot = dict(x=res.freqs, y=res.mean, yerr=res.sem if np.any(res.sem) else None,
                xlabel="RF frequency (MHz)", ylabel="contrast", title="CW spectrum")
    _emit(args, "spectrum", {"freq_mhz": res.freqs, "contrast": res.mean, "sem": res.sem}, meta, plot)
    k = int(np.argmax(np.abs(res.mean)))
    print(f"peak |contrast| {abs(res.mean[k]):.6g} at {res.freqs[k]:.6g} MHz")
    return 0


def cmd_rabi(args, cfg: RunConfig) -> int:
    rb = cfg["rabi"]
    f_tr = _transition(cfg)
    f_drive = args.f_drive or rb["f_drive"] or f_tr
    p_dbm = rb["power_dbm"] if args.power_dbm is None else args.power_dbm
    stop = args.tau_stop or rb["tau_stop"]
    step = args.tau_step or rb["tau_step"]
    tau = db_sweep(0.0, stop, step)
    eps = strain_amplitude(float(dbm_to_mw(p_dbm)), f_drive, cfg.modes, cfg.calib)
    omega = rabi_frequency(cfg.zfs, cfg.couplings, cfg.strain_direction.scaled(eps), cfg["drive"]["pair"])
    drive = cfg.drive(omega, f_drive - f_tr)
    trace = rabi_trace(drive, cfg.rates, tau, cfg.readout)
    d = trace.diagnostics
    meta = _meta(cfg, "rabi", f_drive_mhz=f_drive, power_dbm=p_dbm, strain=eps, omega_model_mhz=omega,
                 trace_drift=d.trace_drift, hermiticity_drift=d.hermiticity_drift,
                 min_eigenvalue=d.min_eigenvalue)
    fit = fit_rabi(trace)
    meta.update(omega_r_mhz=fit.omega_r, decay_rate=fit.decay_rate, residual_rms=fit.residual_rms)
    model = damped_cosine(trace.times, fit.offset, fit.amplitude, fit.decay_rate, fit.omega_r, fit.phase)
    plot = dict(x=trace.times, y=trace.signal, xlabel="pulse length (us)", ylabel="signal",
                title="Rabi trace", fit=(trace.times, model))
    _emit(args, "rabi", {"tau_us": trace.times, "signal": trace.signal}, meta, plot)
    print(f"omega_r {fit.omega_r:.9g} MHz")
    return 0


def cmd_rabi_power(args, cfg: RunConfig) -> int:
    rb = cfg["rabi"]
    f_drive = args.f_drive or rb["f_drive"] or _transition(cfg)
    powers_dbm = np.asarray(args.powers_dbm or rb["powers_dbm"], dtype=float)
    tau = db_sweep(0.0, rb["tau_stop"], rb["tau_step"])
    res = rabi_power_sweep(dbm_to_mw(powers_dbm), f_drive, cfg.zfs, cfg.couplings, cfg.rates, cfg.modes,
                           cfg.calib, tau, t2=cfg["drive"]["t2"], direction=cfg.strain_direction,
                           pair=cfg["drive"]["pair"], readout=cfg.readout)
    cols = {
        "power_dbm": powers_dbm,
        "power_mw": [r.power_mw for r in res.rows],
        "sqrt_power": [r.sqrt_power for r in res.rows],
        "strain": [r.strain for r in res.rows],
        "omega_model_mhz": [r.omega_model for r in res.rows],
        "omega_fit_mhz": [r.omega_fit for r in res.rows],
    }
    meta = _meta(cfg, "rabi-power", f_drive_mhz=f_drive, slope=res.slope, intercept=res.intercept,
                 r_squared=res.r_squared)
    x = np.array(cols["sqrt_power"])
    plot = dict(x=x, y=cols["omega_fit_mhz"], marker="o", xlabel="sqrt(P / mW)",
                ylabel="Rabi frequency (MHz)", title="Rabi frequency vs sqrt(P)",
                fit=(x, res.slope * x + res.intercept))
    _emit(args, "rabi_power", cols, meta, plot)
    print(f"slope {res.slope:.9g} MHz/sqrt(mW)  intercept {res.intercept:.3g} MHz  R^2 {res.r_squared:.9g}")
    return 0


def cmd_s21_fit(args, cfg: RunConfig) -> int:
    rec = parse_touchstone(args.input.read_text(), source=str(args.input))
    modes = find_modes(rec)
    if not modes:
        raise DataError("no resonances found in |S21|")
    rows = []
    for m in modes:
        fit = qcircle_fit(rec, window=m.window)
        try:
            q0 = unloaded_q(fit, args.kind)
        except DataError:
            q0 = float("nan")
        rows.append((fit.f0, fit.q_loaded, q0, fit.diameter, fit.residual))
    cols = {name: [r[k] for r in rows]
            for k, name in enumerate(("f0_mhz", "q_loaded", "q_unloaded", "diameter", "residual"))}
    meta = _meta(cfg, "s21-fit", input=str(args.input), n_modes=len(rows))
    _emit(args, "s21_fit", cols, meta)
    print("f0_mhz,q_loaded,q_unloaded")
    for r in rows:
        print(f"{r[0]:.9g},{r[1]:.9g},{r[2]:.9g}")
    return 0


def cmd_synth_s21(args, cfg: RunConfig) -> int:
    if not args.f_step > 0 or args.f_stop <= args.f_start:
        raise DataError("need f_step > 0 and f_stop > f_start")
    freqs = db_sweep(args.f_start, args.f_stop, args.f_step)
    rec = synth_s21_modesum(cfg.modes, freqs) if args.model == "modesum" else synth_s21_cavity(cfg.cavity, freqs)
    stem = f"synth_{args.model}"
    atomic_write(args.out / f"{stem}.s2p", emit_touchstone(rec, (f"model {args.model}", f"config {cfg.config_hash}")))
    mag_db = 20 * np.log10(np.maximum(np.abs(rec.s21), 1e-300))
    cols = {"freq_mhz": rec.freqs, "s21_re": rec.s21.real, "s21_im": rec.s21.imag, "s21_db": mag_db}
    plot = dict(x=rec.freqs, y=mag_db, xlabel="frequency (MHz)", ylabel="|S21| (dB)", title=f"S21 ({args.model})")
    _emit(args, stem, cols, _meta(cfg, "synth-s21", model=args.model), plot)
    print(f"wrote {args.out / (stem + '.s2p')} ({len(freqs)} points)")
    return 0


def cmd_estimate(args, cfg: RunConfig) -> int:
    est = cfg["estimate"]
    f_t = args.f_t if args.f_t is not None else est["f_t"]
    e = estimate_ensemble(cfg.optics, cfg.film, f_t)
    lines = [("r_um", e.r), ("volume_m3", e.volume), ("n_pc_m3", e.n_pc), ("n_molecules", e.n_molecules)]
    if e.n_triplets is not None:
        lines.append(("n_triplets", e.n_triplets))
    c1 = args.c1 if args.c1 is not None else est["c1"]
    rate = args.rate if args.rate is not None else cfg.optics.detected_rate
    t = args.time if args.time is not None else est["integration_time"]
    if c1 is not None and e.n_triplets is not None:
        cs = contrast_scaling(e.n_triplets, c1)
        lines.append(("contrast", cs.c))
        if rate is not None:
            lines.append(("snr", shot_noise_snr(cs.c, rate, t)))
    for k, v in lines:
        print(f"{k} {v:.6g}")
    if args.format in ("csv", "both"):
        write_csv(args.out / "estimate.csv", {"quantity": [k for k, _ in lines], "value": [v for _, v in lines]})
        write_meta(args.out / "estimate.meta.json", _meta(cfg, "estimate"))
    return 0


def cmd_eta(args, cfg: RunConfig) -> int:
    vals = dict(cfg["energy"])
    for k in vals:
        flag = getattr(args, k)
        if flag is not None:
            vals[k] = flag
    missing = [k for k, v in vals.items() if v is None]
    if missing:
        raise DataError("missing energy components: " + ", ".join("--" + m.replace("_", "-") for m in missing))
    eta = coupling_eta(EnergyBudget(**vals))
    print(f"eta {eta:.6g}")
    return 0


COMMANDS = {
    "spectrum": cmd_spectrum,
    "rabi": cmd_rabi,
    "rabi-power": cmd_rabi_power,
    "s21-fit": cmd_s21_fit,
    "synth-s21": cmd_synth_s21,
    "estimate": cmd_estimate,
    "eta": cmd_eta,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _load(args)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"hodsar: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"hodsar: data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"hodsar: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
