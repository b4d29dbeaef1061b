"""End-to-end HODSAR experiment synthesis and order-of-magnitude estimators."""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .constants import AVOGADRO, TWO_PI
from .dynamics import (
    DriveSpec,
    LindbladDiagnostics,
    ReadoutSpec,
    TripletRateParams,
    build_rate_matrix,
    driven_steady_states,
    driven_triplet,
    fit_rabi,
    propagate_populations,
    rabi_trace,
    steady_state,
)
from .errors import DataError, EmptyReadout, ZeroEnergyBudget
from .resonator import ResonatorModeSet, TransductionCalib, strain_amplitude
from .spin import (
    PAIR_INDEX,
    StrainCouplings,
    StrainField,
    ZfsParams,
    strain_hamiltonian,
)

# --- ensemble size -----------------------------------------------------------


@dataclass(frozen=True)
class OpticsSpec:
    wavelength: float = 532.0  # nm
    numerical_aperture: float = 0.40
    spot_radius_override: float | None = None  # um
    detected_rate: float | None = None  # counts/s
    collection_note: str = ""

    def __post_init__(self):
        if not self.wavelength > 0 or not 0 < self.numerical_aperture <= 1:
            raise DataError("need wavelength > 0 and 0 < NA <= 1")


@dataclass(frozen=True)
class FilmSpec:
    """Doped molecular film.

    ``molar_mass`` defaults to the p-terphenyl host (a 1 % blend is almost
    entirely host); pentacene itself is 278.3 g/mol.
    """

    thickness: float = 1.0  # um
    pentacene_fraction: float = 0.01
    mass_density: float = 1.0  # g/cm^3
    molar_mass: float = 230.3  # g/mol

    def __post_init__(self):
        if min(self.thickness, self.mass_density, self.molar_mass) <= 0:
            raise DataError("film thickness, density and molar mass must be > 0")
        if not 0 < self.pentacene_fraction <= 1:
            raise DataError("pentacene_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class EnsembleEstimate:
    r: float  # um
    volume: float  # m^3
    n_pc: float  # m^-3
    n_molecules: float
    f_t: float | None = None
    n_triplets: float | None = None


def spot_radius(o: OpticsSpec) -> float:
    """Diffraction-limited spot radius 0.61 lambda / NA, in um."""
    if o.spot_radius_override is not None:
        return float(o.spot_radius_override)
    return 0.61 * o.wavelength / o.numerical_aperture * 1e-3


def estimate_ensemble(o: OpticsSpec, f: FilmSpec, f_t: float | None = None) -> EnsembleEstimate:
    if f_t is not None and not 0 <= f_t <= 1:
        raise DataError("f_t must lie in [0, 1]")
    r = spot_radius(o)
    volume = np.pi * (r * 1e-6) ** 2 * (f.thickness * 1e-6)
    n_pc = f.pentacene_fraction * (f.mass_density * 1e6 / f.molar_mass) * AVOGADRO
    n_mol = n_pc * volume
    n_t = None if f_t is None else f_t * n_mol
    return EnsembleEstimate(r, volume, n_pc, n_mol, f_t, n_t)


# --- sensitivity ----------------------------------------------------------------


def shot_noise_snr(c, r, t):
    """Photon-shot-noise limited SNR = C sqrt(R T)."""
    r, t = np.asarray(r, dtype=float), np.asarray(t, dtype=float)
    if np.any(r < 0) or np.any(t < 0):
        raise DataError("rate and time must be >= 0")
    out = np.asarray(c, dtype=float) * np.sqrt(r * t)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ContrastScaling:
    c: float
    capped: bool


def contrast_scaling(n_t: float, c1: float, cap: float = 1.0) -> ContrastScaling:
    """Incoherent-ensemble contrast N_T c1, clipped at ``cap``."""
    if n_t < 0 or c1 < 0:
        raise DataError("n_t and c1 must be >= 0")
    c = n_t * c1
    if c > cap:
        return ContrastScaling(float(cap), True)
    return ContrastScaling(float(c), False)


@dataclass(frozen=True)
class EnergyBudget:
    """Stored mode energies, any single consistent unit."""

    e_ext_mag: float
    e_int_ela: float
    e_int_kin: float
    e_int_ele: float
    e_int_mag: float
    e_ext_ele: float

    def __post_init__(self):
        vals = [self.e_ext_mag, self.e_int_ela, self.e_int_kin, self.e_int_ele,
                self.e_int_mag, self.e_ext_ele]
        if any(not np.isfinite(v) or v < 0 for v in vals):
            raise DataError("energy components must be finite and >= 0")

    @property
    def total(self) -> float:
        return (self.e_int_ela + self.e_int_kin + self.e_int_ele + self.e_int_mag
                + self.e_ext_ele + self.e_ext_mag)


def coupling_eta(b: EnergyBudget) -> float:
    """Fraction of the stored mode energy held by the external magnetic field."""
    total = b.total
    if total <= 0:
        raise ZeroEnergyBudget("energy budget sums to zero")
    return b.e_ext_mag / total


# --- drive strength ---------------------------------------------------------------


def drive_matrix_elements(
    d: float, e_values: np.ndarray, g: StrainCouplings, strain: StrainField, pair: str = "xy"
) -> tuple[np.ndarray, np.ndarray]:
    """Transition frequency and |<i|H_strain|j>| for a batch of rhombic E values.

    Returns arrays (f_transition, element) in MHz, labels assigned as in
    :func:`hodsar.spin.eigensystem`.
    """
    e_values = np.atleast_1d(np.asarray(e_values, dtype=float))
    hd = strain_hamiltonian(strain, g, basis="zero_field").matrix
    # static ZFS is diagonal in the zero-field basis: X: D/3 - E, Y: D/3 + E, Z: -2D/3
    energies = np.stack([np.full_like(e_values, d / 3.0) - e_values,
                         np.full_like(e_values, d / 3.0) + e_values,
                         np.full_like(e_values, -2.0 * d / 3.0)], axis=-1)
    i, j = PAIR_INDEX[pair]
    f_tr = np.abs(energies[:, i] - energies[:, j])
    elem = np.full(e_values.shape, abs(hd[i, j]))
    return f_tr, elem


def rabi_frequency(zfs: ZfsParams, g: StrainCouplings, strain: StrainField, pair: str = "xy") -> float:
    """On-resonance RWA Rabi frequency (MHz) of a harmonic strain of amplitude ``strain``.

    For a drive H cos(2 pi f t), the rotating-wave coupling is |H_ij| / 2, so
    the Rabi frequency equals the matrix element |H_ij|.
    """
    return float(drive_matrix_elements(zfs.d, [zfs.e], g, strain, pair)[1][0])


def saturation_rate(omega1, detuning, t2):
    """Rate-equation limit of a coherently driven pair, 1/us.

    W = (2 pi Omega1)^2 T2 / (2 (1 + (2 pi delta T2)^2)).
    """
    omega1 = np.asarray(omega1, dtype=float)
    detuning = np.asarray(detuning, dtype=float)
    return (TWO_PI * omega1) ** 2 * t2 / (2.0 * (1.0 + (TWO_PI * detuning * t2) ** 2))


# --- CW spectrum ------------------------------------------------------------------


@dataclass(frozen=True)
class InhomogeneitySpec:
    sigma_e: float = 0.0  # MHz
    n_samples: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.sigma_e < 0 or self.n_samples < 1:
            raise DataError("need sigma_e >= 0 and n_samples >= 1")


@dataclass(frozen=True)
class SweepResult:
    freqs: np.ndarray  # MHz
    mean: np.ndarray
    sem: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        arrs = [np.asarray(a, dtype=float) for a in (self.freqs, self.mean, self.sem)]
        if len({a.shape for a in arrs}) != 1:
            raise DataError("SweepResult columns must have equal length")
        if not all(np.all(np.isfinite(a)) for a in arrs):
            raise DataError("SweepResult values must be finite")
        for name, a in zip(("freqs", "mean", "sem"), arrs):
            object.__setattr__(self, name, a)


def substream_normals(seed: int, f_index: int, n: int) -> np.ndarray:
    """Standard normals for samples 0..n-1 at frequency ``f_index``.

    Each (frequency, sample) pair owns a Philox counter, so any subset can be
    regenerated independently of evaluation order.
    """
    out = np.empty(n)
    key = int(seed) & ((1 << 64) - 1)
    for s in range(n):
        bg = np.random.Philox(key=key, counter=[s, f_index, 0, 0])
        out[s] = np.random.Generator(bg).standard_normal()
    return out


def pl_signal(pops: np.ndarray, rate_p: TripletRateParams) -> float:
    """CW photoluminescence proxy: radiative flux k_fluor * p_S1."""
    return rate_p.k_fluor * pops[1]


def _cw_point(fi, f, zfs, g, rate_p, ms, cal, inh, p_rf, t2, direction, pair, off_signal):
    eps0 = strain_amplitude(p_rf, f, ms, cal)
    z = substream_normals(inh.seed, fi, inh.n_samples)
    e_local = zfs.e + inh.sigma_e * z
    f_tr, elem = drive_matrix_elements(zfs.d, e_local, g, direction.scaled(eps0), pair)
    w = saturation_rate(elem, f - f_tr, t2)
    on = rate_p.k_fluor * driven_steady_states(rate_p, w, pair)[:, 1]
    contrast = np.where(w == 0, 0.0, (on - off_signal) / off_signal)
    n = inh.n_samples
    sem = float(np.std(contrast, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return float(np.mean(contrast)), sem


def cw_spectrum(
    zfs: ZfsParams,
    g: StrainCouplings,
    rate_p: TripletRateParams,
    ms: ResonatorModeSet,
    cal: TransductionCalib,
    inh: InhomogeneitySpec,
    p_rf: float,
    f_grid: Sequence[float],
    t2: float = 1.0,
    direction: StrainField = StrainField(exy=1.0),
    pair: str = "xy",
    workers: int = 1,
) -> SweepResult:
    """CW-HODSAR contrast (on - off) / off versus RF frequency.

    At each frequency the resonator sets the strain amplitude, each
    inhomogeneity sample sets the local rhombic E, and the drive enters the
    rate model through :func:`saturation_rate`.  ``direction`` is the unit
    strain pattern scaled by the strain amplitude.
    """
    f = np.asarray(f_grid, dtype=float)
    if f.ndim != 1 or np.any(np.diff(f) <= 0):
        raise DataError("f_grid must be increasing")
    off = pl_signal(steady_state(build_rate_matrix(rate_p)), rate_p)
    if off <= 0:
        raise DataError("drive-off PL is zero; contrast undefined")
    no_drive = not any(m.amplitude != 0 for m in ms.modes) or p_rf == 0 or cal.kappa == 0

    def point(i):
        if no_drive:
            return 0.0, 0.0
        return _cw_point(i, f[i], zfs, g, rate_p, ms, cal, inh, p_rf, t2, direction, pair, off)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            res = list(ex.map(point, range(len(f))))
    else:
        res = [point(i) for i in range(len(f))]
    mean = np.array([r[0] for r in res])
    sem = np.array([r[1] for r in res])
    meta = {"seed": inh.seed, "n_samples": inh.n_samples, "sigma_e": inh.sigma_e,
            "p_rf_mw": p_rf, "t2_us": t2, "pair": pair, "model_hash": rate_p.digest()}
    return SweepResult(f, mean, sem, meta)


# --- pulsed sequence --------------------------------------------------------------


@dataclass(frozen=True)
class PulseSequence:
    """Timing of one repetition, all (start, duration) pairs in us."""

    laser_pulse: tuple[float, float] = (0.0, 5.0)
    acoustic_pulse: tuple[float, float] = (6.0, 0.0)
    readout_window: tuple[float, float] = (8.0, 0.3)
    repetitions: int = 1
    period: float | None = None

    def __post_init__(self):
        windows = (self.laser_pulse, self.acoustic_pulse, self.readout_window)
        for start, dur in windows:
            if start < 0 or dur < 0:
                raise DataError("pulse starts and durations must be >= 0")
        if self.repetitions < 1:
            raise DataError("repetitions must be >= 1")
        end = max(s + d for s, d in windows)
        if self.period is not None and end > self.period + 1e-12:
            raise DataError("pulse windows exceed the repetition period")
        a0, ad = self.acoustic_pulse
        r0, rd = self.readout_window
        if ad > 0 and rd > 0 and a0 < r0 + rd and r0 < a0 + ad:
            warnings.warn("acoustic pulse overlaps the readout window", stacklevel=2)

    def with_tau(self, tau: float) -> "PulseSequence":
        return PulseSequence(self.laser_pulse, (self.acoustic_pulse[0], tau),
                             self.readout_window, self.repetitions, self.period)

    def with_repetitions(self, n: int) -> "PulseSequence":
        return PulseSequence(self.laser_pulse, self.acoustic_pulse, self.readout_window, n,
                             self.period)


@dataclass(frozen=True)
class PulseRunResult:
    counts: np.ndarray  # per repetition
    mean_per_repetition: float
    populations: np.ndarray  # (S0, S1, Tx, Ty, Tz) entering the readout window

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def shelving_rate_map(rate_p: TripletRateParams, count_rate: float, window: float) -> np.ndarray:
    """Per-level detected count rate (counts/us) during a readout window.

    Singlet population emits at ``count_rate``; a molecule shelved in triplet
    sublevel i spends on average 1 - (1 - exp(-k_i w)) / (k_i w) of the
    window back in the emitting cycle.
    """
    k = rate_p.k_triplet * window
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(k > 0, 1.0 - (1.0 - np.exp(-k)) / np.where(k > 0, k, 1.0), 0.0)
    return count_rate * np.concatenate([[1.0, 1.0], frac])


def sequence_populations(seq: PulseSequence, drive: DriveSpec, rate_p: TripletRateParams) -> np.ndarray:
    """Populations at the start of the readout window.

    The laser pulse is a rate-model transient from S0; after it S1 relaxes to
    S0 and the triplet block evolves coherently for the acoustic pulse
    length, with triplet decay returned to S0.  Dark intervals between pulses
    are not propagated.
    """
    p = np.array([1.0, 0.0, 0.0, 0.0, 0.0])
    laser = seq.laser_pulse[1]
    if laser > 0:
        p = propagate_populations(build_rate_matrix(rate_p), p, [0.0, laser]).final
        p = np.clip(p, 0.0, None)
        p /= p.sum()
    m_t = p[2:].sum()
    out = np.array([p[0] + p[1], 0.0, *p[2:]])
    tau = seq.acoustic_pulse[1]
    if m_t > 0 and tau > 0:
        traj = driven_triplet(drive, rate_p, [0.0, tau], p_init=p[2:] / m_t)
        t4 = np.clip(traj.populations[-1], 0.0, None) * m_t
        out = np.array([p[0] + p[1] + t4[3], 0.0, *t4[:3]])
    return out


def pulse_sequence_run(
    seq: PulseSequence,
    drive: DriveSpec,
    rate_p: TripletRateParams,
    photon_rate_map: Sequence[float] | Callable[[np.ndarray], float],
    rng_seed: int,
) -> PulseRunResult:
    """Poisson photon counts for every repetition of the sequence.

    ``photon_rate_map`` is either five per-level count rates (counts/us) or a
    callable mapping the population vector to a total rate.
    """
    window = seq.readout_window[1]
    if window <= 0:
        raise EmptyReadout("readout window has zero duration")
    pops = sequence_populations(seq, drive, rate_p)
    if callable(photon_rate_map):
        rate = float(photon_rate_map(pops))
    else:
        rate = float(np.dot(np.asarray(photon_rate_map, dtype=float), pops))
    if rate < 0:
        raise DataError("photon rate must be >= 0")
    mu = rate * window
    rng = np.random.Generator(np.random.Philox(key=int(rng_seed) & ((1 << 64) - 1)))
    counts = rng.poisson(mu, size=seq.repetitions)
    return PulseRunResult(counts, mu, pops)


# --- Rabi power law ----------------------------------------------------------------


@dataclass(frozen=True)
class RabiPowerRow:
    power_mw: float
    sqrt_power: float
    strain: float
    omega_model: float  # MHz
    omega_fit: float  # MHz
    diagnostics: LindbladDiagnostics | None = None


@dataclass(frozen=True)
class RabiPowerResult:
    rows: list[RabiPowerRow]
    slope: float
    intercept: float
    r_squared: float


def rabi_power_sweep(
    powers_mw: Sequence[float],
    f_drive: float,
    zfs: ZfsParams,
    g: StrainCouplings,
    rate_p: TripletRateParams,
    ms: ResonatorModeSet,
    cal: TransductionCalib,
    tau_grid: Sequence[float],
    t2: float = np.inf,
    direction: StrainField = StrainField(exy=1.0),
    pair: str = "xy",
    readout: ReadoutSpec = ReadoutSpec(),
) -> RabiPowerResult:
    """Fitted Rabi frequency against sqrt(P), with a linear regression."""
    rows = []
    detuning = f_drive - drive_matrix_elements(zfs.d, [zfs.e], g, direction, pair)[0][0]
    for p in powers_mw:
        eps = strain_amplitude(p, f_drive, ms, cal)
        om = rabi_frequency(zfs, g, direction.scaled(eps), pair)
        drive = DriveSpec(pair, om, detuning, t2)
        trace = rabi_trace(drive, rate_p, tau_grid, readout)
        fit = fit_rabi(trace)
        rows.append(RabiPowerRow(float(p), float(np.sqrt(p)), float(eps), om, fit.omega_r,
                                 trace.diagnostics))
    x = np.array([r.sqrt_power for r in rows])
    y = np.array([r.omega_fit for r in rows])
    reg = stats.linregress(x, y)
    return RabiPowerResult(rows, float(reg.slope), float(reg.intercept), float(reg.rvalue ** 2))

