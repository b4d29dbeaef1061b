"""Spin-1 operator algebra, zero-field-splitting and spin-strain Hamiltonians.

Energies are in units of h*MHz. Matrices live either in the Zeeman basis
{|+1>, |0>, |-1>} or in the zero-field (Cartesian) basis {|X>, |Y>, |Z>},
where |a> is the state annihilated by S_a. In the zero-field basis every
term of the working Hamiltonian is a real matrix.

Sublevel labels are geometric: ``Tx`` is the eigenstate closest to |X>. For
D > 0, E > 0 this places Tx at D/3 - E, Ty at D/3 + E and Tz at -2D/3, and it
is the labelling under which the strain channels g3, g4, g5 couple exactly
the xy, xz and yz pairs.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Literal

import numpy as np

from .errors import DataError, NotHermitian

Basis = Literal["zeeman", "zero_field"]

LABELS = ("Tx", "Ty", "Tz")
PAIRS = ("xy", "xz", "yz")
PAIR_INDEX = {"xy": (0, 1), "xz": (0, 2), "yz": (1, 2)}

DEGENERACY_TOL = 1e-6  # MHz
HERMITIAN_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpinMatrices:
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray

    def anticommutator(self, a: str, b: str) -> np.ndarray:
        sa, sb = getattr(self, "s" + a), getattr(self, "s" + b)
        return sa @ sb + sb @ sa


@lru_cache(maxsize=1)
def spin1_operators() -> SpinMatrices:
    """Spin-1 matrices in the Zeeman basis {|+1>, |0>, |-1>} with hbar = 1."""
    r = 1.0 / np.sqrt(2.0)
    sx = r * np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex)
    sy = r * np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], dtype=complex)
    sz = np.diag([1.0, 0.0, -1.0]).astype(complex)
    return SpinMatrices(_frozen(sx), _frozen(sy), _frozen(sz))


# Columns are |X>, |Y>, |Z> written in the Zeeman basis.
ZERO_FIELD_UNITARY = _frozen(
    np.array(
        [
            [-1.0, 1j, 0.0],
            [0.0, 0.0, np.sqrt(2.0)],
            [1.0, 1j, 0.0],
        ]
    )
    / np.sqrt(2.0)
)


@dataclass(frozen=True)
class ZfsParams:
    d: float  # MHz
    e: float  # MHz

    def __post_init__(self):
        if not (np.isfinite(self.d) and np.isfinite(self.e)):
            raise DataError("ZFS parameters must be finite")
        if abs(self.e) > abs(self.d) / 3.0 + 1e-12:
            warnings.warn(
                f"|E| = {abs(self.e):g} MHz exceeds |D|/3 = {abs(self.d) / 3:g} MHz",
                stacklevel=2,
            )


@dataclass(frozen=True)
class StrainField:
    """Symmetric strain tensor; dimensionless. ``f_drive`` (MHz) marks a
    time-harmonic amplitude."""

    exx: float = 0.0
    eyy: float = 0.0
    ezz: float = 0.0
    exy: float = 0.0
    exz: float = 0.0
    eyz: float = 0.0
    f_drive: float | None = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.components)):
            raise DataError("strain components must be finite")

    @property
    def components(self) -> np.ndarray:
        return np.array([self.exx, self.eyy, self.ezz, self.exy, self.exz, self.eyz])

    @classmethod
    def hydrostatic(cls, e0: float) -> "StrainField":
        return cls(exx=e0, eyy=e0, ezz=e0)

    def scaled(self, factor: float) -> "StrainField":
        c = self.components * factor
        return StrainField(*c, f_drive=self.f_drive)

    def tensor(self) -> np.ndarray:
        return np.array(
            [
                [self.exx, self.exy, self.exz],
                [self.exy, self.eyy, self.eyz],
                [self.exz, self.eyz, self.ezz],
            ]
        )


@dataclass(frozen=True)
class StrainCouplings:
    """Spin-strain coupling constants, MHz per unit strain.

    ``g1`` multiplies (S^2 - S(S+1)), which is identically zero for S = 1; it
    is kept so parameter sets can be carried around unchanged.
    """

    g2: float = 0.0
    g3: float = 0.0
    g4: float = 0.0
    g5: float = 0.0
    g1: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite([self.g1, self.g2, self.g3, self.g4, self.g5])):
            raise DataError("couplings must be finite")


@dataclass(frozen=True)
class Hamiltonian:
    matrix: np.ndarray
    basis: Basis = "zeeman"

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix))
        if self.basis not in ("zeeman", "zero_field"):
            raise DataError(f"unknown basis {self.basis!r}")

    def __add__(self, other: "Hamiltonian") -> "Hamiltonian":
        other = other.to_basis(self.basis)
        return Hamiltonian(self.matrix + other.matrix, self.basis)

    def __mul__(self, k: float) -> "Hamiltonian":
        return Hamiltonian(self.matrix * k, self.basis)

    __rmul__ = __mul__

    def to_basis(self, basis: Basis) -> "Hamiltonian":
        if basis == self.basis:
            return self
        u = ZERO_FIELD_UNITARY
        if basis == "zero_field":
            m = u.conj().T @ self.matrix @ u
        else:
            m = u @ self.matrix @ u.conj().T
        return Hamiltonian(m, basis)

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        m = self.matrix
        scale = max(1.0, np.max(np.abs(m)))
        return bool(np.max(np.abs(m - m.conj().T)) <= tol * scale)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))


def zfs_hamiltonian(p: ZfsParams, basis: Basis = "zeeman") -> Hamiltonian:
    """D (Sz^2 - 2/3) + E (Sx^2 - Sy^2); traceless."""
    s = spin1_operators()
    m = p.d * (s.sz @ s.sz - (2.0 / 3.0) * np.eye(3)) + p.e * (s.sx @ s.sx - s.sy @ s.sy)
    return Hamiltonian(m).to_basis(basis)


def strain_hamiltonian(
    s: StrainField, g: StrainCouplings, basis: Basis = "zeeman"
) -> Hamiltonian:
    """Reduced spin-strain Hamiltonian (the g1 channel vanishes for S = 1)."""
    ops = spin1_operators()
    sx2_sy2 = ops.sx @ ops.sx - ops.sy @ ops.sy
    m = (
        g.g2 * (s.exx - s.eyy) * sx2_sy2
        + g.g3 * s.exy * ops.anticommutator("x", "y")
        + g.g4 * s.exz * ops.anticommutator("x", "z")
        + g.g5 * s.eyz * ops.anticommutator("y", "z")
    )
    return Hamiltonian(m).to_basis(basis)


@dataclass(frozen=True)
class EigenSystem:
    """Eigen-decomposition with energies sorted descending.

    ``states[:, k]`` is the eigenvector for ``energies[k]`` (in ``basis``) and
    ``labels[k]`` its sublevel name.
    """

    energies: np.ndarray
    states: np.ndarray
    labels: tuple[str, str, str]
    basis: Basis = "zeeman"
    degenerate: bool = False

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def energy(self, label: str) -> float:
        return float(self.energies[self.index(label)])

    def state(self, label: str) -> np.ndarray:
        return self.states[:, self.index(label)]

    def labelled_states(self) -> np.ndarray:
        """Eigenvectors as columns in (Tx, Ty, Tz) order."""
        return self.states[:, [self.index(lab) for lab in LABELS]]


def _assign_labels(vecs_zf: np.ndarray) -> tuple[str, ...]:
    # Choose the permutation maximizing total overlap with |X>, |Y>, |Z>.
    overlap = np.abs(vecs_zf) ** 2  # rows: cartesian axis, cols: eigenvector
    best, best_score = None, -1.0
    for perm in itertools.permutations(range(3)):
        score = sum(overlap[perm[k], k] for k in range(3))
        if score > best_score + 1e-15:
            best, best_score = perm, score
    return tuple(LABELS[best[k]] for k in range(3))


def eigensystem(h: Hamiltonian) -> EigenSystem:
    if not h.is_hermitian():
        raise NotHermitian("Hamiltonian is not Hermitian")
    hz = h.to_basis("zero_field").matrix
    hz = 0.5 * (hz + hz.conj().T)
    w, v = np.linalg.eigh(hz)
    order = np.argsort(-w, kind="stable")
    w, v = w[order], v[:, order]
    labels = _assign_labels(v)
    degenerate = bool(np.any(np.abs(np.diff(w)) < DEGENERACY_TOL))
    if h.basis == "zeeman":
        v = ZERO_FIELD_UNITARY @ v
    w = w.copy()
    w.setflags(write=False)
    return EigenSystem(w, _frozen(v), labels, h.basis, degenerate)


@dataclass(frozen=True)
class TransitionRecord:
    pair: str
    f_transition: float  # MHz
    matrix_element: float  # MHz
    degenerate: bool = False
    labels: tuple[str, str] = field(default=("", ""))


def drive_in_eigenbasis(es: EigenSystem, drive: Hamiltonian) -> np.ndarray:
    """Drive matrix in the labelled eigenbasis, ordered (Tx, Ty, Tz)."""
    if not drive.is_hermitian():
        raise NotHermitian("drive is not Hermitian")
    v = es.labelled_states()
    return v.conj().T @ drive.to_basis(es.basis).matrix @ v


def transition_table(es: EigenSystem, drive: Hamiltonian) -> list[TransitionRecord]:
    m = drive_in_eigenbasis(es, drive)
    out = []
    for pair in PAIRS:
        i, j = PAIR_INDEX[pair]
        li, lj = LABELS[i], LABELS[j]
        out.append(
            TransitionRecord(
                pair=pair,
                f_transition=abs(es.energy(li) - es.energy(lj)),
                matrix_element=float(abs(m[i, j])),
                degenerate=es.degenerate,
                labels=(li, lj),
            )
        )
    return out


def transition_frequency(zfs: ZfsParams, pair: str = "xy") -> float:
    es = eigensystem(zfs_hamiltonian(zfs))
    a, b = (LABELS[k] for k in PAIR_INDEX[pair])
    return abs(es.energy(a) - es.energy(b))


def resonance_detuning(f_drive: float, record: TransitionRecord) -> float:
    """Drive detuning f_drive - f_transition in MHz; zero on resonance."""
    if not f_drive > 0:
        raise DataError("f_drive must be positive")
    return f_drive - record.f_transition
