"""CSV/SVG/metadata writers. All file writes are atomic (temp file + rename)."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np


def atomic_write(path: str | os.PathLike, data: str | bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": "\n"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def format_number(x) -> str:
    if isinstance(x, (str, bool)) or x is None:
        return str(x)
    return f"{float(x):.9g}"


def csv_text(columns: Mapping[str, Sequence]) -> str:
    names = list(columns)
    arrays = [list(columns[n]) for n in names]
    n = {len(a) for a in arrays}
    if len(n) > 1:
        raise ValueError("CSV columns differ in length")
    lines = [",".join(names)]
    for row in zip(*arrays):
        lines.append(",".join(format_number(v) for v in row))
    return "\n".join(lines) + "\n"


def write_csv(path, columns: Mapping[str, Sequence]) -> Path:
    return atomic_write(path, csv_text(columns))


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, float) and not np.isfinite(v):
        return str(v)
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


def write_meta(path, meta: Mapping) -> Path:
    return atomic_write(path, json.dumps(_jsonable(dict(meta)), indent=2, sort_keys=True) + "\n")


def write_svg(path, x, y, xlabel: str, ylabel: str, title: str = "", yerr=None,
              fit: tuple[np.ndarray, np.ndarray] | None = None, marker: str = "-") -> Path:
    """Self-contained SVG line plot."""
    import io

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with plt.rc_context({"svg.hashsalt": "hodsar", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(x, y, marker, color="C0", lw=1.2, ms=4)
        if yerr is not None:
            ax.fill_between(x, np.asarray(y) - yerr, np.asarray(y) + yerr, color="C0", alpha=0.25, lw=0)
        if fit is not None:
            ax.plot(fit[0], fit[1], "-", color="C3", lw=1.0)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return atomic_write(path, buf.getvalue())
