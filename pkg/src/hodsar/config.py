"""Run configuration: a nested YAML document validated against a fixed schema.

Resolution order is schema defaults, then the named preset, then the user's
document.  Unknown keys and mistyped values are rejected with the dotted
path of the offending entry.  Complex numbers are written ``[re, im]``.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from typing import Any

import numpy as np
import yaml

from .dynamics import DriveSpec, ReadoutSpec, TripletRateParams
from .errors import ConfigError, DataError
from .experiment import EnergyBudget, FilmSpec, InhomogeneitySpec, OpticsSpec, PulseSequence
from .resonator import CavitySpec, ResonatorMode, ResonatorModeSet, TransductionCalib
from .spin import StrainCouplings, StrainField, ZfsParams

class _Optional:
    """Schema marker for numeric keys whose default is "absent"."""

    def __deepcopy__(self, memo):
        return self

    def __repr__(self):
        return "OPTIONAL"


OPTIONAL = _Optional()

# Resonator mode positions other than 104.8 MHz and all amplitudes are
# placeholders; the Q values are the reported Q-circle results.
_DEFAULT_MODES = [
    {"f0": 103.9, "q": 5500.0, "amplitude": [0.6, 0.0]},
    {"f0": 104.5, "q": 7800.0, "amplitude": [1.0, 0.0]},
    {"f0": 104.8, "q": 8505.2, "amplitude": [0.8, 0.0]},
    {"f0": 105.3, "q": 8500.0, "amplitude": [0.7, 0.0]},
]

SCHEMA: dict[str, Any] = {
    "preset": "paper-appendix",
    "seed": 0,
    "zfs": {"d": 1400.0, "e": 50.0},
    "couplings": {"g1": 0.0, "g2": 1e6, "g3": 1e6, "g4": 1e6, "g5": 1e6},
    "rates": {
        "pump_g": 1.0, "k_fluor": 40.0, "k_isc": 4.0, "branch": [0.76, 0.16, 0.08],
        "gamma_xy": 0.01, "gamma_xz": 0.01, "gamma_yz": 0.01,
        "k_x": 0.05, "k_y": 0.02, "k_z": 0.005,
    },
    "drive": {"pair": "xy", "t2": 1.0},
    "readout": {"kind": "difference", "sign": 1.0},
    "strain_direction": {"exx": 0.0, "eyy": 0.0, "ezz": 0.0, "exy": 1.0, "exz": 0.0, "eyz": 0.0},
    "resonator": {
        "modes": _DEFAULT_MODES,
        "background": [0.0, 0.0],
        "background_slope": [0.0, 0.0],
        "ref_freq": 0.0,
    },
    "cavity": {
        "mirror_period": 18.95, "mirror_strips": 100, "mirror_reflectivity": 0.02,
        "idt_period": 37.9, "idt_pairs": 20, "electrode_reflectivity": 0.0,
        "transduction": 1.0, "gap": 2000.0, "velocity": 3979.0, "loss_db_per_us": 0.0,
    },
    "calib": {"kappa": 1e-6, "p_ref": 1.0},
    "optics": {"wavelength": 532.0, "numerical_aperture": 0.40,
               "spot_radius_override": OPTIONAL, "detected_rate": OPTIONAL},
    "film": {"thickness": 1.0, "pentacene_fraction": 0.01, "mass_density": 1.0,
             "molar_mass": 230.3},
    "inhomogeneity": {"sigma_e": 0.0, "n_samples": 1},
    "sequence": {
        "laser_pulse": [0.0, 5.0], "acoustic_pulse": [6.0, 0.0],
        "readout_window": [8.0, 0.3], "repetitions": 1000, "count_rate": 10.0,
    },
    "sweep": {"f_start": 100.0, "f_stop": 110.0, "f_step": 0.1, "power_dbm": 0.0},
    "rabi": {"f_drive": OPTIONAL, "power_dbm": 0.0, "tau_stop": 4.0, "tau_step": 0.01,
             "powers_dbm": [0.0, 1.43, 2.86, 4.29, 5.71, 7.14, 8.57, 10.0]},
    "estimate": {"f_t": OPTIONAL, "c1": OPTIONAL, "integration_time": 1.0},
    "energy": {"e_ext_mag": OPTIONAL, "e_int_ela": OPTIONAL, "e_int_kin": OPTIONAL,
               "e_int_ele": OPTIONAL, "e_int_mag": OPTIONAL, "e_ext_ele": OPTIONAL},
}

MODE_SCHEMA = {"f0": None, "q": None, "amplitude": [1.0, 0.0]}  # None = required

PRESETS: dict[str, dict] = {
    "paper-appendix": {"zfs": {"d": 1400.0, "e": 50.0}},
    # E chosen so that the Tx-Ty splitting 2E equals the 104.5 MHz drive
    "device-104p5": {"zfs": {"d": 1400.0, "e": 52.25}, "rabi": {"f_drive": 104.5}},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _check_value(path: str, default, value):
    if default is OPTIONAL:
        if value is None or isinstance(value, (int, float)) and not isinstance(value, bool):
            return None if value is None else float(value)
        raise ConfigError(path, f"expected a number, got {type(value).__name__}")
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, "expected a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {type(value).__name__}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {type(value).__name__}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(path, "expected a string")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(path, "expected a list")
        if default and isinstance(default[0], dict):
            return [_validate_mode(f"{path}[{i}]", v) for i, v in enumerate(value)]
        out = []
        for i, v in enumerate(value):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{path}[{i}]", "expected a number")
            out.append(float(v))
        return out
    raise ConfigError(path, "unsupported schema entry")


def _validate_mode(path: str, value) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(path, "expected a mapping")
    for k in value:
        if k not in MODE_SCHEMA:
            raise ConfigError(f"{path}.{k}", "unknown key")
    out = {}
    for k, default in MODE_SCHEMA.items():
        if k not in value:
            if default is None:
                raise ConfigError(f"{path}.{k}", "missing required field")
            out[k] = copy.deepcopy(default)
        else:
            out[k] = _check_value(f"{path}.{k}", 0.0 if default is None else default, value[k])
    return out


def _validate(schema: dict, doc: dict, prefix: str = "") -> dict:
    if not isinstance(doc, dict):
        raise ConfigError(prefix or "<root>", "expected a mapping")
    for k in doc:
        if k not in schema:
            raise ConfigError(f"{prefix}{k}", "unknown key")
    out = {}
    for k, default in schema.items():
        path = f"{prefix}{k}"
        if isinstance(default, dict):
            out[k] = _validate(default, doc.get(k, {}) or {}, path + ".")
        elif k in doc:
            out[k] = _check_value(path, default, doc[k])
        else:
            out[k] = None if default is OPTIONAL else copy.deepcopy(default)
    return out


def _c(pair) -> complex:
    return complex(pair[0], pair[1])


@dataclass(frozen=True)
class RunConfig:
    data: dict
    config_hash: str

    def __getitem__(self, key):
        return self.data[key]

    @property
    def preset(self) -> str:
        return self.data["preset"]

    @property
    def seed(self) -> int:
        return self.data["seed"]

    @property
    def zfs(self) -> ZfsParams:
        return ZfsParams(**self.data["zfs"])

    @property
    def couplings(self) -> StrainCouplings:
        return StrainCouplings(**self.data["couplings"])

    @property
    def rates(self) -> TripletRateParams:
        r = dict(self.data["rates"])
        r["branch"] = tuple(r["branch"])
        return TripletRateParams(**r)

    @property
    def strain_direction(self) -> StrainField:
        return StrainField(**self.data["strain_direction"])

    def drive(self, rabi_frequency: float, detuning: float = 0.0) -> DriveSpec:
        d = self.data["drive"]
        return DriveSpec(d["pair"], rabi_frequency, detuning, d["t2"])

    @property
    def readout(self) -> ReadoutSpec:
        return ReadoutSpec(kind=self.data["readout"]["kind"], sign=self.data["readout"]["sign"])

    @property
    def modes(self) -> ResonatorModeSet:
        r = self.data["resonator"]
        modes = tuple(ResonatorMode(m["f0"], m["q"], _c(m["amplitude"])) for m in r["modes"])
        return ResonatorModeSet(modes, _c(r["background"]), _c(r["background_slope"]), r["ref_freq"])

    @property
    def cavity(self) -> CavitySpec:
        return CavitySpec(**self.data["cavity"])

    @property
    def calib(self) -> TransductionCalib:
        return TransductionCalib(**self.data["calib"])

    @property
    def optics(self) -> OpticsSpec:
        return OpticsSpec(**self.data["optics"])

    @property
    def film(self) -> FilmSpec:
        return FilmSpec(**self.data["film"])

    @property
    def inhomogeneity(self) -> InhomogeneitySpec:
        return InhomogeneitySpec(seed=self.seed, **self.data["inhomogeneity"])

    @property
    def sequence(self) -> PulseSequence:
        s = self.data["sequence"]
        return PulseSequence(tuple(s["laser_pulse"]), tuple(s["acoustic_pulse"]),
                             tuple(s["readout_window"]), s["repetitions"])

    @property
    def energy(self) -> EnergyBudget:
        e = self.data["energy"]
        missing = [k for k, v in e.items() if v is None]
        if missing:
            raise ConfigError(f"energy.{missing[0]}", "missing required field")
        return EnergyBudget(**e)


def canonical_hash(data: dict) -> str:
    text = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def build_config(doc: dict | None = None, preset: str | None = None, seed: int | None = None) -> RunConfig:
    doc = copy.deepcopy(doc or {})
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "expected a mapping")
    name = preset or doc.get("preset") or SCHEMA["preset"]
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    doc["preset"] = name
    if seed is not None:
        doc["seed"] = int(seed)
    base = _merge(_validate(SCHEMA, {}), PRESETS[name])
    # validate user keys against the schema, then apply them over the preset
    _validate(SCHEMA, doc)
    merged = _merge(base, doc)
    data = _validate(SCHEMA, merged)
    cfg = RunConfig(data, canonical_hash(data))
    _instantiate(cfg)
    return cfg


def _instantiate(cfg: RunConfig) -> None:
    for section in ("zfs", "couplings", "rates", "strain_direction", "readout", "modes",
                    "cavity", "calib", "optics", "film", "inhomogeneity", "sequence"):
        try:
            getattr(cfg, section)
        except DataError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(section, str(exc)) from None
        except TypeError as exc:
            raise ConfigError(section, str(exc)) from None
    try:
        DriveSpec(cfg["drive"]["pair"], 0.0, 0.0, cfg["drive"]["t2"])
    except DataError as exc:
        raise ConfigError("drive", str(exc)) from None


def load_config(text: str, preset: str | None = None, seed: int | None = None) -> RunConfig:
    """Parse and validate a YAML configuration document."""
    try:
        doc = yaml.safe_load(text) if text.strip() else {}
    except yaml.YAMLError as exc:
        raise ConfigError("<root>", f"not valid YAML: {exc}") from None
    return build_config(doc or {}, preset=preset, seed=seed)


def default_config_text() -> str:
    data = _validate(SCHEMA, {})
    return yaml.safe_dump({k: v for k, v in data.items() if v is not None}, sort_keys=False)


def db_sweep(start: float, stop: float, step: float) -> np.ndarray:
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)
