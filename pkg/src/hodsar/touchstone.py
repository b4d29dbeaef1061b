"""Two-port Touchstone v1 (.s2p) reader and writer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadOptionLine, BadRow, NonMonotoneGrid, TouchstoneError
from .resonator import SParamRecord

FREQ_SCALE = {"HZ": 1e-6, "KHZ": 1e-3, "MHZ": 1.0, "GHZ": 1e3}  # -> MHz
FORMATS = ("RI", "MA", "DB")


@dataclass
class TouchstoneFile:
    freq_unit: str = "GHZ"
    parameter: str = "S"
    fmt: str = "MA"
    z0: float = 50.0
    rows: list[list[float]] = field(default_factory=list)
    comments: list[str] = field(default_factory=list)


def _parse_option(tokens: list[str], line_no: int) -> dict:
    opt = {"freq_unit": "GHZ", "parameter": "S", "fmt": "MA", "z0": 50.0}
    i = 0
    while i < len(tokens):
        tok = tokens[i].upper()
        if tok in FREQ_SCALE:
            opt["freq_unit"] = tok
        elif tok in ("S", "Y", "Z", "H", "G"):
            if tok != "S":
                raise BadOptionLine(line_no, f"parameter type {tok} not supported")
            opt["parameter"] = tok
        elif tok in FORMATS:
            opt["fmt"] = tok
        elif tok == "R":
            try:
                opt["z0"] = float(tokens[i + 1])
            except (IndexError, ValueError):
                raise BadOptionLine(line_no, "R must be followed by a resistance") from None
            i += 1
        else:
            raise BadOptionLine(line_no, f"unrecognized token {tokens[i]!r}")
        i += 1
    return opt


def read_touchstone(text: str) -> TouchstoneFile:
    tf = None
    pending_comments = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        body, _, comment = raw.partition("!")
        if comment or raw.lstrip().startswith("!"):
            pending_comments.append(comment.strip())
        body = body.strip()
        if not body:
            continue
        if body.startswith("["):
            raise TouchstoneError(f"line {line_no}: Touchstone v2 keywords are not supported")
        if body.startswith("#"):
            if tf is not None:
                raise BadOptionLine(line_no, "more than one option line")
            tf = TouchstoneFile(**_parse_option(body[1:].split(), line_no))
            continue
        if tf is None:
            raise BadOptionLine(line_no, "data before option line")
        parts = body.split()
        if len(parts) != 9:
            raise BadRow(line_no, f"expected 9 columns for a 2-port row, got {len(parts)}")
        try:
            tf.rows.append([float(p) for p in parts])
        except ValueError:
            raise BadRow(line_no, "non-numeric field") from None
    if tf is None:
        raise BadOptionLine(1, "missing option line")
    tf.comments = pending_comments
    return tf


def _to_complex(a: np.ndarray, b: np.ndarray, fmt: str) -> np.ndarray:
    if fmt == "RI":
        return a + 1j * b
    mag = a if fmt == "MA" else 10.0 ** (a / 20.0)
    return mag * np.exp(1j * np.deg2rad(b))


def parse_touchstone(text: str, source: str = "") -> SParamRecord:
    """Parse 2-port Touchstone text into MHz and linear complex S-parameters."""
    tf = read_touchstone(text)
    if not tf.rows:
        raise TouchstoneError("no data rows")
    data = np.array(tf.rows)
    freqs = data[:, 0] * FREQ_SCALE[tf.freq_unit]
    if np.any(np.diff(freqs) <= 0):
        raise NonMonotoneGrid("frequencies must be strictly increasing")
    cols = [_to_complex(data[:, 1 + 2 * k], data[:, 2 + 2 * k], tf.fmt) for k in range(4)]
    s11, s21, s12, s22 = cols
    note = source or "; ".join(c for c in tf.comments if c)
    return SParamRecord(freqs, s21, s11=s11, s12=s12, s22=s22, z0=tf.z0, source=note)


def emit_touchstone(rec: SParamRecord, comments: tuple[str, ...] = ()) -> str:
    """Touchstone text in MHz / RI with full double precision."""
    zero = np.zeros_like(rec.s21)
    cols = [rec.s11, rec.s21, rec.s12, rec.s22]
    cols = [zero if c is None else c for c in cols]
    lines = [f"! {c}" for c in comments]
    lines.append(f"# MHz S RI R {rec.z0:g}")
    for k, f in enumerate(rec.freqs):
        vals = [repr(float(f))]
        for c in cols:
            vals += [repr(float(c[k].real)), repr(float(c[k].imag))]
        lines.append(" ".join(vals))
    return "\n".join(lines) + "\n"
