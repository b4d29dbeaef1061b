"""Multimode SAW resonator response: synthesis, Q-circle fitting, transduction.

Frequencies are in MHz, lengths in um, SAW velocity in m/s (so that
f[MHz] / v[m/s] is a wavenumber in cycles/um and L[um] / v[m/s] a time in us).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares, minimize_scalar
from scipy.signal import find_peaks, peak_widths

from .constants import SAW_VELOCITY_LINBO3, TWO_PI
from .errors import CircleFitDegenerate, DataError, NonPassiveSection, ZeroTransfer


@dataclass(frozen=True)
class ResonatorMode:
    f0: float  # MHz
    q_loaded: float
    amplitude: complex = 1.0

    def __post_init__(self):
        if not (self.f0 > 0 and self.q_loaded > 0):
            raise DataError("mode needs f0 > 0 and q_loaded > 0")
        object.__setattr__(self, "amplitude", complex(self.amplitude))

    @property
    def linewidth(self) -> float:
        return self.f0 / self.q_loaded


@dataclass(frozen=True)
class ResonatorModeSet:
    """Lorentzian modes on a complex background ``c + slope * (f - ref_freq)``."""

    modes: tuple[ResonatorMode, ...] = ()
    background: complex = 0.0
    background_slope: complex = 0.0  # per MHz
    ref_freq: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "background", complex(self.background))
        object.__setattr__(self, "background_slope", complex(self.background_slope))
        if len(self.modes) > 1:
            f = np.sort([m.f0 for m in self.modes])
            limit = max(m.linewidth for m in self.modes) / 100.0
            if np.min(np.diff(f)) <= limit:
                warnings.warn("resonator modes are nearly coincident", stacklevel=2)

    def background_at(self, freqs) -> np.ndarray:
        f = np.asarray(freqs, dtype=float)
        return self.background + self.background_slope * (f - self.ref_freq)

    def resonant_part(self, freqs) -> np.ndarray:
        f = np.asarray(freqs, dtype=float)
        out = np.zeros(f.shape, dtype=complex)
        for m in self.modes:
            out += m.amplitude / (1.0 + 2j * m.q_loaded * (f - m.f0) / m.f0)
        return out


@dataclass(frozen=True)
class SParamRecord:
    freqs: np.ndarray  # MHz
    s21: np.ndarray
    s11: np.ndarray | None = None
    s12: np.ndarray | None = None
    s22: np.ndarray | None = None
    z0: float = 50.0
    source: str = ""

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float)
        object.__setattr__(self, "freqs", f)
        if f.ndim != 1 or np.any(np.diff(f) <= 0):
            raise DataError("freqs must be strictly increasing")
        for name in ("s21", "s11", "s12", "s22"):
            v = getattr(self, name)
            if v is None:
                continue
            v = np.asarray(v, dtype=complex)
            if v.shape != f.shape:
                raise DataError(f"{name} length does not match the frequency grid")
            if not np.all(np.isfinite(v)):
                raise DataError(f"{name} has non-finite entries")
            object.__setattr__(self, name, v)

    def window(self, lo: float, hi: float) -> "SParamRecord":
        sel = (self.freqs >= lo) & (self.freqs <= hi)
        pick = lambda a: None if a is None else a[sel]  # noqa: E731
        return SParamRecord(self.freqs[sel], self.s21[sel], pick(self.s11), pick(self.s12),
                            pick(self.s22), self.z0, self.source)


def synth_s21_modesum(ms: ResonatorModeSet, freqs: Sequence[float]) -> SParamRecord:
    f = np.asarray(freqs, dtype=float)
    if np.any(np.diff(f) <= 0):
        raise DataError("freqs must be increasing")
    s21 = ms.background_at(f) + ms.resonant_part(f)
    return SParamRecord(f, s21, source="synth:modesum")


# --- coupled-cavity transfer-matrix model -----------------------------------


@dataclass(frozen=True)
class CavitySpec:
    """1-D acoustic stack: mirror | gap | IDT | gap | mirror.

    Each grating strip and each IDT electrode is a lossless symmetric
    scatterer S = [[i r, t], [t, i r]] with t = sqrt(1 - r^2), centred in its
    cell. ``transduction`` scales the acoustic transmission into S21.
    """

    mirror_period: float = 18.95  # um, Bragg at v / (2 p)
    mirror_strips: int = 100
    mirror_reflectivity: float = 0.02
    idt_period: float = 37.9  # um (one electrode pair)
    idt_pairs: int = 20
    electrode_reflectivity: float = 0.0
    transduction: float = 1.0
    gap: float = 2000.0  # um, each side of the IDT
    velocity: float = SAW_VELOCITY_LINBO3
    loss_db_per_us: float = 0.0

    def __post_init__(self):
        if self.mirror_strips < 1 or self.idt_pairs < 1:
            raise DataError("strip and pair counts must be >= 1")
        for name in ("mirror_reflectivity", "electrode_reflectivity"):
            if abs(getattr(self, name)) >= 1:
                raise NonPassiveSection(f"|{name}| must be < 1")
        if not 0 <= self.transduction <= 1:
            raise NonPassiveSection("transduction amplitude must lie in [0, 1]")
        if self.velocity <= 0 or self.mirror_period <= 0 or self.idt_period <= 0 or self.gap < 0:
            raise DataError("velocity, periods must be > 0 and gap >= 0")
        if self.loss_db_per_us < 0:
            warnings.warn("negative propagation loss: section is active", stacklevel=2)

    @property
    def idt_length(self) -> float:
        return self.idt_pairs * self.idt_period

    @property
    def inner_length(self) -> float:
        return 2 * self.gap + self.idt_length


def _prop_t(f: np.ndarray, length: float, spec: CavitySpec) -> np.ndarray:
    k = TWO_PI * f / spec.velocity  # rad/um
    alpha = 10.0 ** (-spec.loss_db_per_us * (length / spec.velocity) / 20.0)
    t = np.zeros(f.shape + (2, 2), dtype=complex)
    t[..., 0, 0] = np.exp(1j * k * length) / alpha
    t[..., 1, 1] = alpha * np.exp(-1j * k * length)
    return t


def _reflector_t(r: float, shape) -> np.ndarray:
    # T of S = [[i r, t], [t, i r]]
    tr = np.sqrt(1.0 - r * r)
    m = np.array([[1.0, -1j * r], [1j * r, tr * tr + r * r]], dtype=complex) / tr
    return np.broadcast_to(m, shape + (2, 2)).copy()


def _t_to_s(t: np.ndarray, det: complex | None = None):
    t11 = t[..., 0, 0]
    s21 = 1.0 / t11
    s11 = t[..., 1, 0] / t11
    s22 = -t[..., 0, 1] / t11
    if det is None:
        det = t[..., 0, 0] * t[..., 1, 1] - t[..., 0, 1] * t[..., 1, 0]
    s12 = det / t11
    return s11, s21, s12, s22


def _grating_t(f, period, count, r, spec):
    half = _prop_t(f, period / 2.0, spec)
    cell = half @ _reflector_t(r, f.shape) @ half
    return np.linalg.matrix_power(cell, count)


def cavity_sections(spec: CavitySpec, freqs) -> dict[str, np.ndarray]:
    """Transfer matrices of the individual stack sections (left to right)."""
    f = np.asarray(freqs, dtype=float)
    mirror = _grating_t(f, spec.mirror_period, spec.mirror_strips, spec.mirror_reflectivity, spec)
    idt = _grating_t(f, spec.idt_period / 2.0, 2 * spec.idt_pairs, spec.electrode_reflectivity, spec)
    gap = _prop_t(f, spec.gap, spec)
    return {"mirror": mirror, "gap": gap, "idt": idt}


def synth_s21_cavity(spec: CavitySpec, freqs: Sequence[float]) -> SParamRecord:
    f = np.asarray(freqs, dtype=float)
    if np.any(np.diff(f) <= 0):
        raise DataError("freqs must be increasing")
    sec = cavity_sections(spec, f)
    total = sec["mirror"] @ sec["gap"] @ sec["idt"] @ sec["gap"] @ sec["mirror"]
    # every section has det T = 1 (reciprocal); recomputing it loses precision in the stopband
    s11, s21, s12, s22 = _t_to_s(total, det=1.0)
    a = spec.transduction
    return SParamRecord(f, a * s21, s11=s11, s12=a * s12, s22=s22, source="synth:cavity")


def mirror_reflection(spec: CavitySpec, freqs) -> tuple[np.ndarray, np.ndarray]:
    """Reflection of the left mirror seen from inside, and of the right one."""
    f = np.asarray(freqs, dtype=float)
    m = cavity_sections(spec, f)["mirror"]
    s11, _, _, s22 = _t_to_s(m, det=1.0)
    return s22, s11


# --- mode finding and Q-circle fit --------------------------------------------


@dataclass(frozen=True)
class ModeCandidate:
    f0: float
    prominence: float
    window: tuple[float, float]
    width: float  # estimated FWHM of |s21|, MHz


def find_modes(
    rec: SParamRecord,
    rel_prominence: float = 0.05,
    noise_sigmas: float = 8.0,
    window_widths: float = 4.0,
) -> list[ModeCandidate]:
    """Local maxima of |s21| above a prominence threshold, sorted by frequency.

    The threshold is the larger of ``rel_prominence`` times the |s21| range and
    ``noise_sigmas`` times a robust estimate of point-to-point noise.
    """
    if len(rec.freqs) < 16:
        raise DataError("find_modes needs at least 16 points")
    mag = np.abs(rec.s21)
    span = float(mag.max() - mag.min())
    if span <= 1e-15 * max(1.0, float(mag.max())):
        return []
    d = np.diff(mag)
    sigma = 1.4826 * np.median(np.abs(d - np.median(d))) / np.sqrt(2.0)
    threshold = max(rel_prominence * span, noise_sigmas * sigma)
    idx, props = find_peaks(mag, prominence=threshold)
    if len(idx) == 0:
        return []
    widths = peak_widths(mag, idx, rel_height=0.5, prominence_data=(
        props["prominences"], props["left_bases"], props["right_bases"]))[0]
    f = rec.freqs
    df = np.gradient(f)
    out = []
    for k, i in enumerate(idx):
        fw = float(widths[k] * df[i])
        half = max(window_widths * fw, 8 * df[i])
        out.append(ModeCandidate(float(f[i]), float(props["prominences"][k]),
                                 (float(f[i] - half), float(f[i] + half)), fw))
    out.sort(key=lambda c: c.f0)
    return out


@dataclass(frozen=True)
class QCircleFit:
    f0: float  # MHz
    q_loaded: float
    center: complex
    radius: float
    residual: float  # rms geometric distance to the circle

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius


def _algebraic_circle(z: np.ndarray) -> tuple[complex, float]:
    # Kasa fit: x^2 + y^2 + a x + b y + c = 0, centred for conditioning
    zc = z.mean()
    w = z - zc
    s = np.max(np.abs(w))
    if s == 0:
        raise CircleFitDegenerate("all points coincide")
    w = w / s
    x, y = w.real, w.imag
    a = np.column_stack([x, y, np.ones_like(x)])
    rhs = -(x * x + y * y)
    sol, _, rank, sv = np.linalg.lstsq(a, rhs, rcond=None)
    if rank < 3 or sv[-1] < 1e-10 * sv[0]:
        raise CircleFitDegenerate("points are collinear")
    cx, cy = -sol[0] / 2.0, -sol[1] / 2.0
    r2 = cx * cx + cy * cy - sol[2]
    if r2 <= 0:
        raise CircleFitDegenerate("no real circle through the points")
    return zc + s * complex(cx, cy), s * float(np.sqrt(r2))


def fit_circle(z: Sequence[complex]) -> tuple[complex, float, float]:
    """Algebraic fit refined by geometric least squares; returns (center, radius, rms)."""
    z = np.asarray(z, dtype=complex)
    c0, r0 = _algebraic_circle(z)
    spread = np.max(np.abs(z - z.mean()))
    if r0 > 1e6 * spread:
        raise CircleFitDegenerate("points are collinear")

    def resid(p):
        return np.abs(z - complex(p[0], p[1])) - p[2]

    res = least_squares(resid, [c0.real, c0.imag, r0], x_scale=[spread, spread, spread],
                        xtol=1e-15, ftol=1e-15, gtol=1e-15)
    c = complex(res.x[0], res.x[1])
    r = abs(float(res.x[2]))
    if not r > 0 or r > 1e6 * spread:
        raise CircleFitDegenerate("circle fit diverged")
    return c, r, float(np.sqrt(np.mean(res.fun ** 2)))


def qcircle_fit(
    rec: SParamRecord, window: tuple[float, float] | None = None, refine: bool = True
) -> QCircleFit:
    """Loaded Q and resonance frequency from the S21 trace around one mode.

    The samples are fitted by a circle; the phase angle about the circle
    centre then follows theta0 - 2 arctan(2 Q (f - f0) / f0).  With
    ``refine`` the result seeds a complex fit of one Lorentzian on a linear
    background, which removes the skew that neighbouring-mode tails put on
    the circle.
    """
    r = rec if window is None else rec.window(*window)
    f, z = r.freqs, r.s21
    if len(f) < 12:
        raise DataError("Q-circle fit needs at least 12 points in the window")
    c, radius, rms = fit_circle(z)

    theta = np.unwrap(np.angle(z - c))
    fc = 0.5 * (f[0] + f[-1])
    x = (f - fc) / fc
    # off-resonance point is roughly the mean of the window edges
    edge = 0.5 * (z[0] + z[-1])
    k0 = int(np.argmax(np.abs(z - edge)))
    slope = np.gradient(theta, x)[k0]
    q0 = -slope / 4.0
    if not np.isfinite(q0) or q0 == 0:
        q0 = 1.0 / max(x[-1] - x[0], 1e-12)

    def model(p):
        th0, q, x0 = p
        return th0 - 2.0 * np.arctan(2.0 * q * (x - x0) / (1.0 + x0))

    p0 = [theta[k0], q0, x[k0]]
    res = least_squares(lambda p: model(p) - theta, p0, x_scale=[1.0, abs(q0), 1.0 / abs(q0)],
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
    th0, q, x0 = res.x
    if refine:
        q, x0, c, radius, rms = _refine_linear_background(x, z, th0, q, x0, c, radius, rms)
    return QCircleFit(f0=float(fc * (1.0 + x0)), q_loaded=float(abs(q)), center=c,
                      radius=radius, residual=rms)


def _refine_linear_background(x, z, th0, q, x0, c, radius, rms):
    a = 2.0 * radius * np.exp(1j * th0)
    b = c - a / 2.0
    sign = 1.0 if q > 0 else -1.0

    def model(p):
        b0, b1, amp = complex(p[0], p[1]), complex(p[2], p[3]), complex(p[4], p[5])
        u = 2.0 * p[6] * (x - p[7]) / (1.0 + p[7])
        return b0 + b1 * (x - x0) + amp / (1.0 + 1j * sign * u)

    def resid(p):
        d = model(p) - z
        return np.concatenate([d.real, d.imag])

    p0 = [b.real, b.imag, 0.0, 0.0, a.real, a.imag, abs(q), x0]
    scale = [radius, radius, radius * abs(q), radius * abs(q), radius, radius, abs(q), 1.0 / abs(q)]
    res = least_squares(resid, p0, x_scale=scale, xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=5000)
    p = res.x
    new_rms = float(np.sqrt(np.mean(np.abs(model(p) - z) ** 2)))
    if not (res.success and p[6] > 0 and new_rms <= max(rms, 1e-300) * 10):
        return q, x0, c, radius, rms
    amp = complex(p[4], p[5])
    # centre of the circle traced at the resonance, background evaluated at f0
    bg = complex(p[0], p[1]) + complex(p[2], p[3]) * (p[7] - x0)
    return p[6], p[7], bg + amp / 2.0, abs(amp) / 2.0, new_rms


def unloaded_q(fit: QCircleFit, kind: str = "transmission") -> float:
    """Unloaded Q from the loaded fit using the circle diameter as the
    coupling measure (transmission: Q0 = QL / (1 - |S21(f0)|))."""
    d = fit.diameter
    if kind == "transmission":
        if d >= 1:
            raise DataError("diameter >= 1: transmission coupling correction undefined")
        return fit.q_loaded / (1.0 - d)
    if kind == "reflection":
        if d >= 2:
            raise DataError("diameter >= 2: reflection coupling correction undefined")
        return fit.q_loaded * 2.0 / (2.0 - d)
    raise DataError(f"unknown resonator kind {kind!r}")


# --- transduction -------------------------------------------------------------


@lru_cache(maxsize=64)
def _transfer_peak(ms: ResonatorModeSet) -> float:
    if not ms.modes:
        raise DataError("transfer function needs at least one mode")
    if all(m.amplitude == 0 for m in ms.modes):
        raise ZeroTransfer("all mode amplitudes are zero")
    best = 0.0
    for m in ms.modes:
        lw = m.linewidth
        res = minimize_scalar(lambda f: -abs(ms.resonant_part(f)), bounds=(m.f0 - 3 * lw, m.f0 + 3 * lw),
                              method="bounded", options={"xatol": lw * 1e-9})
        best = max(best, -float(res.fun), float(abs(ms.resonant_part(m.f0))))
    return best


def transfer_function(ms: ResonatorModeSet, f) -> np.ndarray | float:
    """|resonant part of S21| normalized to its maximum; in [0, 1]."""
    peak = _transfer_peak(ms)
    t = np.minimum(np.abs(ms.resonant_part(f)) / peak, 1.0)
    return float(t) if np.ndim(t) == 0 else t


@dataclass(frozen=True)
class TransductionCalib:
    """Strain amplitude ``kappa`` at the strongest mode peak for ``p_ref`` mW.

    The default is an uncalibrated placeholder.
    """

    kappa: float = 1e-6
    p_ref: float = 1.0  # mW

    def __post_init__(self):
        if self.kappa < 0 or not self.p_ref > 0:
            raise DataError("kappa must be >= 0 and p_ref > 0")


def strain_amplitude(p_rf, f, ms: ResonatorModeSet, cal: TransductionCalib):
    """eps0 = kappa * sqrt(p_rf / p_ref) * t(f)."""
    p = np.asarray(p_rf, dtype=float)
    if np.any(p < 0):
        raise DataError("RF power must be >= 0")
    if cal.kappa == 0 or np.all(p == 0):
        return np.zeros(np.broadcast(p, np.asarray(f)).shape) if np.ndim(f) or np.ndim(p) else 0.0
    eps = cal.kappa * np.sqrt(p / cal.p_ref) * transfer_function(ms, f)
    return float(eps) if np.ndim(eps) == 0 else eps
