"""Triplet population kinetics and coherent (Lindblad) sublevel dynamics.

Rates are in 1/us, frequencies in MHz, times in us.  Population vectors are
ordered (S0, S1, Tx, Ty, Tz).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import least_squares

from .constants import TWO_PI
from .errors import (
    DataError,
    DegenerateChain,
    IntegratorFailure,
    InvalidRate,
    InvalidState,
    NoOscillationDetected,
)
from .spin import PAIR_INDEX, PAIRS

LEVELS = ("S0", "S1", "Tx", "Ty", "Tz")
S0, S1, TX, TY, TZ = range(5)

RTOL = 1e-10
ATOL = 1e-12


@dataclass(frozen=True)
class TripletRateParams:
    """Optical cycle rates (1/us).

    The defaults are order-of-magnitude placeholders, not measured values.
    ``branch`` is the (Tx, Ty, Tz) share of intersystem crossing.
    """

    pump_g: float = 1.0
    k_fluor: float = 40.0
    k_isc: float = 4.0
    branch: tuple[float, float, float] = (0.76, 0.16, 0.08)
    gamma_xy: float = 0.01
    gamma_xz: float = 0.01
    gamma_yz: float = 0.01
    k_x: float = 0.05
    k_y: float = 0.02
    k_z: float = 0.005

    def __post_init__(self):
        object.__setattr__(self, "branch", tuple(float(b) for b in self.branch))
        for name in ("pump_g", "k_fluor", "k_isc", "gamma_xy", "gamma_xz",
                     "gamma_yz", "k_x", "k_y", "k_z"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise InvalidRate(f"{name} = {v!r} must be finite and >= 0")
        if len(self.branch) != 3 or min(self.branch) < 0:
            raise InvalidRate("branch must hold three non-negative probabilities")
        if abs(sum(self.branch) - 1.0) > 1e-9:
            raise InvalidRate(f"branch sums to {sum(self.branch)!r}, not 1")

    def gamma(self, pair: str) -> float:
        return getattr(self, "gamma_" + pair)

    @property
    def k_triplet(self) -> np.ndarray:
        return np.array([self.k_x, self.k_y, self.k_z])

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


_NO_RATES = dict(pump_g=0.0, k_fluor=0.0, k_isc=0.0, gamma_xy=0.0, gamma_xz=0.0, gamma_yz=0.0,
                 k_x=0.0, k_y=0.0, k_z=0.0)


@dataclass(frozen=True)
class RateMatrix:
    """Generator G with dp/dt = G p; G[j, i] is the i -> j rate."""

    generator: np.ndarray

    def __post_init__(self):
        g = np.array(self.generator, dtype=float)
        g.setflags(write=False)
        object.__setattr__(self, "generator", g)


def build_rate_matrix(p: TripletRateParams, drive_w: float = 0.0, pair: str = "xy") -> RateMatrix:
    if not np.isfinite(drive_w) or drive_w < 0:
        raise InvalidRate(f"drive rate {drive_w!r} must be >= 0")
    if pair not in PAIR_INDEX:
        raise DataError(f"unknown pair {pair!r}")
    g = np.zeros((5, 5))

    def add(src, dst, rate):
        g[dst, src] += rate
        g[src, src] -= rate

    add(S0, S1, p.pump_g)
    add(S1, S0, p.k_fluor)
    for k, b in enumerate(p.branch):
        add(S1, TX + k, p.k_isc * b)
    for name in PAIRS:
        i, j = PAIR_INDEX[name]
        add(TX + i, TX + j, p.gamma(name))
        add(TX + j, TX + i, p.gamma(name))
    for k, rate in enumerate(p.k_triplet):
        add(TX + k, S0, rate)
    i, j = PAIR_INDEX[pair]
    add(TX + i, TX + j, drive_w)
    add(TX + j, TX + i, drive_w)
    return RateMatrix(g)


def _reachable(g: np.ndarray, start: int) -> list[int]:
    seen, stack = {start}, [start]
    while stack:
        i = stack.pop()
        for j in np.nonzero(g[:, i] > 0)[0]:
            if j != i and j not in seen:
                seen.add(int(j))
                stack.append(int(j))
    return sorted(seen)


def steady_state(m: RateMatrix, start: int = S0) -> np.ndarray:
    """Stationary populations of the chain started in ``start`` (S0).

    States never reached from ``start`` carry zero population.  The reachable
    set must form a single closed class, otherwise the stationary state is not
    unique and :class:`DegenerateChain` is raised.
    """
    g = m.generator
    idx = _reachable(g, start)
    sub = g[np.ix_(idx, idx)]
    n = len(idx)
    p = np.zeros(g.shape[0])
    if n == 1:
        p[idx[0]] = 1.0
        return p
    scale = max(np.max(np.abs(sub)), 1e-300)
    sv = np.linalg.svd(sub / scale, compute_uv=False)
    if np.sum(sv < 1e-12 * sv[0]) > 1:
        raise DegenerateChain("stationary state is not unique")
    a = sub / scale
    a[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    sol = np.linalg.solve(a, rhs)
    sol = np.where((sol < 0) & (sol >= -1e-12), 0.0, sol)
    if np.any(sol < 0):
        raise DegenerateChain("negative stationary population")
    p[idx] = sol / sol.sum()
    return p


def driven_steady_states(p: TripletRateParams, drive_w: Sequence[float], pair: str = "xy") -> np.ndarray:
    """Stationary populations for a batch of drive rates, shape (len(drive_w), 5).

    Vectorized form of ``steady_state(build_rate_matrix(p, w, pair))``.
    """
    w = np.atleast_1d(np.asarray(drive_w, dtype=float))
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise InvalidRate("drive rates must be finite and >= 0")
    g0 = build_rate_matrix(p, 0.0, pair).generator
    unit = build_rate_matrix(TripletRateParams(**_NO_RATES), 1.0, pair).generator
    idx = _reachable(g0 + unit, S0)
    out = np.zeros((len(w), g0.shape[0]))
    if len(idx) == 1:
        out[:, idx[0]] = 1.0
        return out
    sub0, subd = g0[np.ix_(idx, idx)], unit[np.ix_(idx, idx)]
    a = sub0[None] + w[:, None, None] * subd[None]
    a = a / np.maximum(np.max(np.abs(a), axis=(1, 2)), 1e-300)[:, None, None]
    sv = np.linalg.svd(a, compute_uv=False)
    if np.any(np.sum(sv < 1e-12 * sv[:, :1], axis=1) > 1):
        raise DegenerateChain("stationary state is not unique")
    a[:, -1, :] = 1.0
    rhs = np.zeros((len(w), len(idx), 1))
    rhs[:, -1, 0] = 1.0
    sol = np.linalg.solve(a, rhs)[..., 0]
    sol = np.where((sol < 0) & (sol >= -1e-12), 0.0, sol)
    if np.any(sol < 0):
        raise DegenerateChain("negative stationary population")
    out[:, idx] = sol / sol.sum(axis=1, keepdims=True)
    return out


@dataclass(frozen=True)
class PopulationTrajectory:
    times: np.ndarray
    populations: np.ndarray  # (len(times), 5)

    @property
    def final(self) -> np.ndarray:
        return self.populations[-1]


def propagate_populations(
    m: RateMatrix,
    p0: Sequence[float],
    t_grid: Sequence[float],
    method: str = "auto",
    rtol: float = RTOL,
    atol: float = ATOL,
) -> PopulationTrajectory:
    """Integrate dp/dt = G p with an adaptive embedded Runge-Kutta scheme.

    ``method="auto"`` uses explicit DOP853 unless the horizon spans more than
    ~1e4 times the fastest rate, where implicit Radau IIA is far cheaper.
    """
    p0 = np.asarray(p0, dtype=float)
    t = np.asarray(t_grid, dtype=float)
    if np.any(p0 < 0) or abs(p0.sum() - 1.0) > 1e-9:
        raise InvalidState("p0 must be a probability vector")
    if t.ndim != 1 or len(t) == 0 or np.any(np.diff(t) <= 0):
        raise DataError("t_grid must be strictly increasing")
    g = m.generator
    if not np.any(g) or t[-1] == t[0]:
        return PopulationTrajectory(t, np.tile(p0, (len(t), 1)))
    if method == "auto":
        stiff = np.max(np.abs(np.diag(g))) * (t[-1] - t[0]) > 1e4
        method = "Radau" if stiff else "DOP853"
    kw = {"jac": g} if method in ("Radau", "BDF", "LSODA") else {}
    # Step to each grid point instead of reading the dense interpolant, whose
    # error sits orders of magnitude above the step tolerance.
    out = np.empty((len(t), len(p0)))
    out[0] = y = p0
    for k in range(1, len(t)):
        sol = solve_ivp(lambda _t, y: g @ y, (t[k - 1], t[k]), y, method=method,
                        rtol=rtol, atol=atol, **kw)
        if not sol.success:
            raise IntegratorFailure(f"{method} failed at t={sol.t[-1]}: {sol.message}")
        out[k] = y = sol.y[:, -1]
    return PopulationTrajectory(t, out)


# --- coherent dynamics ------------------------------------------------------


@dataclass(frozen=True)
class LindbladDiagnostics:
    trace_drift: float
    hermiticity_drift: float
    min_eigenvalue: float


@dataclass(frozen=True)
class DensityTrajectory:
    times: np.ndarray
    rho: np.ndarray  # (len(times), n, n)
    diagnostics: LindbladDiagnostics

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.einsum("tii->ti", self.rho))


def _check_state(rho0: np.ndarray) -> None:
    if rho0.ndim != 2 or rho0.shape[0] != rho0.shape[1]:
        raise InvalidState("rho0 must be square")
    if np.max(np.abs(rho0 - rho0.conj().T)) > 1e-10:
        raise InvalidState("rho0 is not Hermitian")
    if abs(np.trace(rho0) - 1.0) > 1e-10:
        raise InvalidState(f"trace(rho0) = {np.trace(rho0).real:.12g}")
    if np.min(np.linalg.eigvalsh(rho0)) < -1e-10:
        raise InvalidState("rho0 is not positive semidefinite")


def lindblad_propagate(
    h_t: np.ndarray | Callable[[float], np.ndarray],
    collapse: Sequence[tuple[np.ndarray, float]],
    rho0: np.ndarray,
    t_grid: Sequence[float],
    rtol: float = RTOL,
    atol: float = ATOL,
) -> DensityTrajectory:
    """Integrate d(rho)/dt = -i 2pi [H, rho] + sum_k r_k D[L_k] rho.

    ``h_t`` is a constant matrix or a callable ``t -> H(t)`` (h*MHz); each
    collapse entry is ``(L, rate)`` with the rate in 1/us.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    _check_state(rho0)
    n = rho0.shape[0]
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or len(t) == 0 or np.any(np.diff(t) <= 0):
        raise DataError("t_grid must be strictly increasing")

    ops = []
    for op, rate in collapse:
        if rate < 0:
            raise InvalidRate("collapse rates must be >= 0")
        if rate == 0:
            continue
        op = np.asarray(op, dtype=complex)
        ops.append((op, op.conj().T, 0.5 * op.conj().T @ op, rate))

    if callable(h_t):
        hfun = lambda tt: -1j * TWO_PI * np.asarray(h_t(tt), dtype=complex)  # noqa: E731
    else:
        hc = -1j * TWO_PI * np.asarray(h_t, dtype=complex)
        hfun = lambda tt: hc  # noqa: E731

    def rhs(tt, y):
        rho = y.reshape(n, n)
        a = hfun(tt)
        d = a @ rho - rho @ a
        for op, opd, half, rate in ops:
            d += rate * (op @ rho @ opd - half @ rho - rho @ half)
        return d.ravel()

    if len(t) == 1 or t[-1] == t[0]:
        rhos = np.repeat(rho0[None], len(t), axis=0)
    else:
        sol = solve_ivp(rhs, (t[0], t[-1]), rho0.ravel(), method="DOP853",
                        t_eval=t, rtol=rtol, atol=atol)
        if not sol.success:
            raise IntegratorFailure(f"Lindblad integration failed: {sol.message}")
        rhos = sol.y.T.reshape(len(t), n, n)

    tr = np.einsum("tii->t", rhos)
    herm = np.max(np.abs(rhos - np.conj(np.transpose(rhos, (0, 2, 1)))))
    hsym = 0.5 * (rhos + np.conj(np.transpose(rhos, (0, 2, 1))))
    diag = LindbladDiagnostics(
        trace_drift=float(np.max(np.abs(tr - np.trace(rho0)))),
        hermiticity_drift=float(herm),
        min_eigenvalue=float(np.min(np.linalg.eigvalsh(hsym))),
    )
    return DensityTrajectory(t, rhos, diag)


def rwa_hamiltonian(pair: str, omega1: float, delta: float = 0.0, dim: int = 3) -> np.ndarray:
    """Rotating-frame two-level drive embedded in the (Tx, Ty, Tz, ...) space.

    H = (delta/2)(|i><i| - |j><j|) + (omega1/2)(|i><j| + |j><i|), so the
    on-resonance flop is sin^2(pi * omega1 * t).
    """
    i, j = PAIR_INDEX[pair]
    h = np.zeros((dim, dim), dtype=complex)
    h[i, i], h[j, j] = delta / 2.0, -delta / 2.0
    h[i, j] = h[j, i] = omega1 / 2.0
    return h


def _proj(dim: int, a: int, b: int) -> np.ndarray:
    m = np.zeros((dim, dim), dtype=complex)
    m[a, b] = 1.0
    return m


# --- pulsed Rabi -------------------------------------------------------------


@dataclass(frozen=True)
class DriveSpec:
    pair: str = "xy"
    rabi_frequency: float = 1.0  # MHz
    detuning: float = 0.0  # MHz
    t2: float = np.inf  # us

    def __post_init__(self):
        if self.pair not in PAIR_INDEX:
            raise DataError(f"unknown pair {self.pair!r}")
        if not self.rabi_frequency >= 0:
            raise DataError("rabi_frequency must be >= 0")
        if not self.t2 > 0:
            raise DataError("t2 must be > 0")


@dataclass(frozen=True)
class ReadoutSpec:
    """Map of sublevel populations to a scalar.

    ``difference``: p_i - p_j of the driven pair.  ``pl``: weighted sum over
    (Tx, Ty, Tz); default weights are the decay rates k_i scaled to max 1.
    ``sign`` flips the reported signal.
    """

    kind: str = "difference"
    weights: tuple[float, float, float] | None = None
    sign: float = 1.0

    def __post_init__(self):
        if self.kind not in ("difference", "pl"):
            raise DataError(f"unknown readout kind {self.kind!r}")

    def apply(self, pops: np.ndarray, pair: str, rate_p: TripletRateParams) -> np.ndarray:
        pops = np.atleast_2d(pops)
        if self.kind == "difference":
            i, j = PAIR_INDEX[pair]
            val = pops[:, i] - pops[:, j]
        else:
            w = self.weights
            if w is None:
                k = rate_p.k_triplet
                w = k / k.max() if k.max() > 0 else np.ones(3)
            val = pops[:, :3] @ np.asarray(w, dtype=float)
        return self.sign * val


@dataclass(frozen=True)
class RabiTrace:
    times: np.ndarray
    signal: np.ndarray
    metadata: dict = field(default_factory=dict)
    diagnostics: LindbladDiagnostics | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        s = np.asarray(self.signal, dtype=float)
        if t.shape != s.shape or np.any(np.diff(t) <= 0):
            raise DataError("times must be strictly increasing and match signal")
        if not np.all(np.isfinite(s)):
            raise DataError("signal must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "signal", s)


def triplet_collapse_ops(drive: DriveSpec, rate_p: TripletRateParams, dim: int = 4):
    """Dephasing of the driven pair, sublevel relaxation and decay to a sink.

    Basis: (Tx, Ty, Tz, sink).  Pure dephasing L = P_i - P_j at rate 1/(2 T2)
    damps the pair coherence at 1/T2.
    """
    ops = []
    i, j = PAIR_INDEX[drive.pair]
    if np.isfinite(drive.t2):
        deph = _proj(dim, i, i) - _proj(dim, j, j)
        ops.append((deph, 1.0 / (2.0 * drive.t2)))
    for name in PAIRS:
        a, b = PAIR_INDEX[name]
        g = rate_p.gamma(name)
        ops.append((_proj(dim, a, b), g))
        ops.append((_proj(dim, b, a), g))
    if dim > 3:
        for k, rate in enumerate(rate_p.k_triplet):
            ops.append((_proj(dim, 3, k), rate))
    return ops


def driven_triplet(
    drive: DriveSpec,
    rate_p: TripletRateParams,
    t_grid: Sequence[float],
    p_init: Sequence[float] | None = None,
) -> DensityTrajectory:
    """Propagate the triplet block (plus a decay sink) under a constant RWA drive."""
    p_init = np.asarray(rate_p.branch if p_init is None else p_init, dtype=float)
    rho0 = np.zeros((4, 4), dtype=complex)
    rho0[:3, :3] = np.diag(p_init / p_init.sum())
    h = rwa_hamiltonian(drive.pair, drive.rabi_frequency, drive.detuning, dim=4)
    return lindblad_propagate(h, triplet_collapse_ops(drive, rate_p), rho0, t_grid)


def rabi_trace(
    drive: DriveSpec,
    rate_p: TripletRateParams,
    tau_grid: Sequence[float],
    readout: ReadoutSpec = ReadoutSpec(),
) -> RabiTrace:
    """Readout signal versus acoustic pulse length.

    Each pulse length starts from the ISC-polarized sublevel populations, so
    one propagation from tau = 0 yields every grid point.
    """
    tau = np.asarray(tau_grid, dtype=float)
    if tau.ndim != 1 or len(tau) == 0 or np.any(np.diff(tau) <= 0) or tau[0] < 0:
        raise DataError("tau_grid must be non-negative and strictly increasing")
    grid = tau if tau[0] == 0 else np.concatenate([[0.0], tau])
    traj = driven_triplet(drive, rate_p, grid)
    pops = traj.populations[-len(tau):]
    signal = readout.apply(pops, drive.pair, rate_p)
    meta = {
        "drive": asdict(drive),
        "readout": readout.kind,
        "model_hash": rate_p.digest(),
        "seed": None,
    }
    return RabiTrace(tau, signal, meta, traj.diagnostics)


@dataclass(frozen=True)
class RabiFit:
    omega_r: float  # MHz
    decay_rate: float  # 1/us
    phase: float  # rad
    offset: float
    amplitude: float
    residual_rms: float


def damped_cosine(t, offset, amplitude, decay, freq, phase):
    return offset + amplitude * np.exp(-decay * t) * np.cos(TWO_PI * freq * t + phase)


def _frequency_guess(t: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    # Uniform resampling, zero-padded periodogram; returns (freq, peak, floor).
    n = len(t)
    tu = np.linspace(t[0], t[-1], n)
    yu = np.interp(tu, t, y)
    yu = yu - yu.mean()
    dt = tu[1] - tu[0]
    nfft = 16 * int(2 ** np.ceil(np.log2(n)))
    spec = np.abs(np.fft.rfft(yu * np.hanning(n), nfft)) ** 2
    freqs = np.fft.rfftfreq(nfft, dt)
    k = 1 + int(np.argmax(spec[1:]))
    return float(freqs[k]), float(spec[k]), float(np.median(spec[1:]))


def fit_rabi(trace: RabiTrace, snr_threshold: float = 25.0) -> RabiFit:
    """Least-squares fit of offset + A exp(-decay t) cos(2 pi f t + phase)."""
    t, y = trace.times, trace.signal
    if len(t) < 8:
        raise DataError("fit_rabi needs at least 8 points")
    scale = max(1.0, float(np.max(np.abs(y))))
    if np.std(y) <= 1e-12 * scale:
        raise NoOscillationDetected("trace is constant")
    f0, peak, floor = _frequency_guess(t, y)
    if peak <= snr_threshold * floor or f0 * (t[-1] - t[0]) < 1.0:
        raise NoOscillationDetected(f"no spectral peak above the noise floor (f={f0:.4g} MHz)")

    # linear solve for offset and quadrature amplitudes at the guessed frequency
    basis = np.column_stack([np.ones_like(t), np.cos(TWO_PI * f0 * t), np.sin(TWO_PI * f0 * t)])
    c, *_ = np.linalg.lstsq(basis, y, rcond=None)
    amp0 = float(np.hypot(c[1], c[2]))
    phase0 = float(np.arctan2(-c[2], c[1]))
    x0 = np.array([c[0], amp0, 0.0, f0, phase0])

    res = least_squares(
        lambda x: damped_cosine(t, *x) - y, x0, method="lm",
        xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=10000,
    )
    offset, amp, decay, freq, phase = res.x
    if freq < 0:
        freq, phase = -freq, -phase
    if amp < 0:
        amp, phase = -amp, phase + np.pi
    phase = float((phase + np.pi) % (2 * np.pi) - np.pi)
    rms = float(np.sqrt(np.mean(res.fun ** 2)))
    return RabiFit(float(freq), float(decay), phase, float(offset), float(amp), rms)
