import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hodsar.cli import main
from hodsar.config import PRESETS, build_config, load_config
from hodsar.errors import BadOptionLine, BadRow, ConfigError, NonMonotoneGrid, TouchstoneError
from hodsar.output import csv_text, format_number, write_csv
from hodsar.resonator import ResonatorMode, ResonatorModeSet, SParamRecord, synth_s21_modesum
from hodsar.spin import transition_frequency
from hodsar.touchstone import emit_touchstone, parse_touchstone, read_touchstone

# --- Touchstone -------------------------------------------------------------------


def test_ri_row_maps_to_s21():
    rec = parse_touchstone("# MHz S RI R 50\n100 0 0 0.5 0 0 0 0 0\n")
    assert rec.freqs[0] == 100.0
    assert rec.s21[0] == 0.5 + 0j
    assert rec.z0 == 50.0


def test_db_format():
    rec = parse_touchstone("# MHz S DB R 50\n100 -99 0 -6.0206 0 -99 0 -99 0\n")
    assert abs(rec.s21[0]) == pytest.approx(0.5, abs=1e-4)


def test_ma_format_and_angle():
    rec = parse_touchstone("# GHz S MA R 75\n0.1 1 0 0.25 90 0 0 0 0\n")
    assert rec.freqs[0] == pytest.approx(100.0)
    assert rec.s21[0] == pytest.approx(0.25j, abs=1e-15)
    assert rec.z0 == 75.0


@pytest.mark.parametrize("unit,scale", [("HZ", 1e-6), ("KHZ", 1e-3), ("MHZ", 1.0), ("GHZ", 1e3)])
def test_frequency_units(unit, scale):
    rec = parse_touchstone(f"# {unit} S RI R 50\n2 0 0 1 0 0 0 0 0\n3 0 0 1 0 0 0 0 0\n")
    np.testing.assert_allclose(rec.freqs, [2 * scale, 3 * scale])


def test_default_option_values():
    tf = read_touchstone("! only defaults\n#\n1 1 0 0 0 0 0 0 0\n")
    assert (tf.freq_unit, tf.fmt, tf.z0) == ("GHZ", "MA", 50.0)
    assert tf.comments == ["only defaults"]


def test_missing_option_line():
    with pytest.raises(BadOptionLine) as exc:
        parse_touchstone("100 0 0 0.5 0 0 0 0 0\n")
    assert exc.value.line_no == 1


def test_bad_option_tokens():
    with pytest.raises(BadOptionLine) as exc:
        parse_touchstone("! c\n# MHz Y RI R 50\n")
    assert exc.value.line_no == 2
    with pytest.raises(BadOptionLine):
        parse_touchstone("# MHz S RI R\n")
    with pytest.raises(BadOptionLine):
        parse_touchstone("# MHz S RI R 50\n# MHz S RI R 50\n")


def test_bad_rows():
    with pytest.raises(BadRow) as exc:
        parse_touchstone("# MHz S RI R 50\n100 0 0 0.5 0 0 0 0\n")
    assert exc.value.line_no == 2
    with pytest.raises(BadRow):
        parse_touchstone("# MHz S RI R 50\n100 0 0 x 0 0 0 0 0\n")


def test_non_monotone_grid():
    text = "# MHz S RI R 50\n101 0 0 1 0 0 0 0 0\n100 0 0 1 0 0 0 0 0\n"
    with pytest.raises(NonMonotoneGrid):
        parse_touchstone(text)


def test_v2_rejected():
    with pytest.raises(TouchstoneError):
        parse_touchstone("[Version] 2.0\n# MHz S RI R 50\n")


def test_inline_comments_ignored():
    rec = parse_touchstone("# MHz S RI R 50 ! option\n100 0 0 0.5 0 0 0 0 0 ! row\n")
    assert rec.s21[0] == 0.5


cplx = st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False)


@settings(max_examples=50)
@given(st.lists(st.tuples(cplx, cplx, cplx, cplx), min_size=1, max_size=20),
       st.floats(1e-3, 1e4))
def test_touchstone_roundtrip(values, f0):
    freqs = f0 + np.arange(len(values)) * 0.125
    cols = np.array(values).T
    rec = SParamRecord(freqs, cols[1], s11=cols[0], s12=cols[2], s22=cols[3])
    back = parse_touchstone(emit_touchstone(rec, ("roundtrip",)))
    np.testing.assert_array_equal(back.freqs, rec.freqs)
    for name in ("s11", "s21", "s12", "s22"):
        np.testing.assert_allclose(getattr(back, name), getattr(rec, name), rtol=1e-9, atol=0)


# --- output ---------------------------------------------------------------------------


def test_csv_header_and_precision():
    text = csv_text({"a": [1.0, 1 / 3], "b": [2, 1e-20]})
    lines = text.splitlines()
    assert lines[0] == "a,b"
    assert lines[2] == "0.333333333,1e-20"
    assert format_number(np.pi) == "3.14159265"


def test_csv_columns_must_match():
    with pytest.raises(ValueError):
        csv_text({"a": [1, 2], "b": [1]})


def test_write_is_atomic_and_leaves_no_temp(tmp_path):
    path = write_csv(tmp_path / "sub" / "x.csv", {"a": [1]})
    assert path.read_text() == "a\n1\n"
    assert [p.name for p in path.parent.iterdir()] == ["x.csv"]


# --- config ---------------------------------------------------------------------------


def test_default_preset_values():
    cfg = load_config("")
    assert cfg.preset == "paper-appendix"
    assert (cfg.zfs.d, cfg.zfs.e) == (1400.0, 50.0)


def test_device_preset_hits_drive_frequency():
    cfg = load_config("preset: device-104p5\n")
    assert cfg.zfs.e == 52.25
    assert transition_frequency(cfg.zfs, "xy") == pytest.approx(104.5, rel=1e-12)


def test_overrides_apply_after_preset():
    cfg = load_config("preset: device-104p5\nzfs:\n  e: 40\n")
    assert cfg.zfs.e == 40.0 and cfg.zfs.d == 1400.0
    assert cfg["rabi"]["f_drive"] == 104.5


def test_unknown_key_names_path():
    with pytest.raises(ConfigError, match=r"zfs\.q"):
        load_config("zfs:\n  q: 1\n")
    with pytest.raises(ConfigError, match="bogus"):
        load_config("bogus: 1\n")


def test_type_mismatch_names_path():
    with pytest.raises(ConfigError, match=r"rates\.k_x"):
        load_config("rates:\n  k_x: fast\n")
    with pytest.raises(ConfigError, match=r"inhomogeneity\.n_samples"):
        load_config("inhomogeneity:\n  n_samples: 2.5\n")


def test_missing_required_field_names_path():
    with pytest.raises(ConfigError, match=r"resonator\.modes\[1\]\.q"):
        load_config("resonator:\n  modes:\n    - {f0: 104, q: 5000}\n    - {f0: 105}\n")


def test_unknown_preset():
    with pytest.raises(ConfigError, match="preset"):
        load_config("preset: nope\n")
    assert set(PRESETS) == {"paper-appendix", "device-104p5"}


def test_invalid_values_surface_as_config_errors():
    with pytest.raises(ConfigError, match="rates"):
        load_config("rates:\n  k_x: -1\n")
    with pytest.raises(ConfigError):
        load_config("zfs: [1, 2]\n")
    with pytest.raises(ConfigError):
        load_config("zfs: {d: 1\n")


def test_config_hash_is_canonical():
    a = load_config("zfs:\n  d: 1400\n  e: 50\nseed: 3\n")
    b = load_config("seed: 3\nzfs: {e: 50.0, d: 1400.0}\n")
    assert a.config_hash == b.config_hash
    assert load_config("seed: 4\n").config_hash != a.config_hash


def test_modes_from_config():
    cfg = build_config({"resonator": {"modes": [{"f0": 104.8, "q": 8505.2, "amplitude": [0.5, 0.5]}]}})
    (m,) = cfg.modes.modes
    assert (m.f0, m.q_loaded, m.amplitude) == (104.8, 8505.2, 0.5 + 0.5j)


# --- CLI ------------------------------------------------------------------------------


def test_unknown_subcommand_is_usage_error(capsys):
    assert main(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err


def test_no_subcommand_is_usage_error(capsys):
    assert main([]) == 1


def test_estimate_report(capsys, tmp_path):
    assert main(["estimate", "--out", str(tmp_path)]) == 0
    out = dict(line.split() for line in capsys.readouterr().out.splitlines())
    assert float(out["r_um"]) == pytest.approx(0.81, abs=0.005)
    assert 4e7 <= float(out["n_molecules"]) <= 7e8
    assert (tmp_path / "estimate.csv").read_text().startswith("quantity,value\n")


def test_estimate_with_snr(capsys, tmp_path):
    argv = ["estimate", "--out", str(tmp_path), "--f-t", "0.01", "--c1", "1e-8", "--rate", "1e6", "--time", "4"]
    assert main(argv) == 0
    out = dict(line.split() for line in capsys.readouterr().out.splitlines())
    c = float(out["contrast"])
    assert float(out["snr"]) == pytest.approx(c * np.sqrt(4e6), rel=1e-5)


def test_eta_command(capsys, tmp_path):
    argv = ["eta", "--out", str(tmp_path)] + [f"--{k}=2" for k in (
        "e-ext-mag", "e-int-ela", "e-int-kin", "e-int-ele", "e-int-mag", "e-ext-ele")]
    assert main(argv) == 0
    assert float(capsys.readouterr().out.split()[1]) == pytest.approx(1 / 6, rel=1e-5)
    assert main(["eta", "--out", str(tmp_path)]) == 2


def test_bad_config_is_data_error(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("zfs:\n  q: 1\n")
    assert main(["estimate", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "zfs.q" in capsys.readouterr().err
    assert main(["estimate", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_numerical_failure_exit_code(tmp_path):
    # paper-appendix transition at 100 MHz sits far off every mode: no resolvable oscillation
    assert main(["rabi", "--out", str(tmp_path), "--format", "csv"]) == 3


def test_s21_fit_on_synthesized_single_mode(tmp_path, capsys):
    cfg = tmp_path / "one.yaml"
    cfg.write_text("resonator:\n  modes:\n    - {f0: 104.8, q: 8505.2}\n")
    common = ["--config", str(cfg), "--out", str(tmp_path), "--format", "csv"]
    assert main(["synth-s21", *common, "--f-start", "104.7", "--f-stop", "104.9", "--f-step", "0.0002"]) == 0
    capsys.readouterr()
    assert main(["s21-fit", str(tmp_path / "synth_modesum.s2p"), *common]) == 0
    rows = capsys.readouterr().out.splitlines()[1:]
    assert len(rows) == 1
    f0, q, _ = map(float, rows[0].split(","))
    assert q == pytest.approx(8505.2, rel=0.02)
    assert f0 == pytest.approx(104.8, rel=1e-4)


def test_synth_roundtrip_matches_memory(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("resonator:\n  modes:\n    - {f0: 104.8, q: 8505.2, amplitude: [0.3, 0.4]}\n")
    assert main(["synth-s21", "--config", str(cfg), "--out", str(tmp_path), "--format", "csv",
                 "--f-start", "104.7", "--f-stop", "104.9", "--f-step", "0.001"]) == 0
    rec = parse_touchstone((tmp_path / "synth_modesum.s2p").read_text())
    ref = synth_s21_modesum(ResonatorModeSet((ResonatorMode(104.8, 8505.2, 0.3 + 0.4j),)), rec.freqs)
    np.testing.assert_allclose(rec.s21, ref.s21, rtol=1e-9)


def test_spectrum_csv_is_byte_identical(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("inhomogeneity: {sigma_e: 0.5, n_samples: 8}\n")
    outs = []
    for k, workers in enumerate(("1", "3")):
        d = tmp_path / f"run{k}"
        assert main(["spectrum", "--config", str(cfg), "--seed", "17", "--out", str(d), "--format", "csv",
                     "--f-start", "103", "--f-stop", "106", "--workers", workers]) == 0
        outs.append((d / "spectrum.csv").read_bytes())
        meta = json.loads((d / "spectrum.meta.json").read_text())
        assert meta["seed"] == 17 and len(meta["config_hash"]) == 64
    assert outs[0] == outs[1]
    assert outs[0].startswith(b"freq_mhz,contrast,sem\n")


def test_seed_environment_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("HODSAR_SEED", "23")
    assert main(["estimate", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "estimate.meta.json").read_text())["seed"] == 23
    assert main(["estimate", "--out", str(tmp_path), "--seed", "5"]) == 0
    assert json.loads((tmp_path / "estimate.meta.json").read_text())["seed"] == 5
    monkeypatch.setenv("HODSAR_SEED", "abc")
    assert main(["estimate", "--out", str(tmp_path)]) == 1


def test_rabi_and_power_commands(tmp_path, capsys):
    assert main(["rabi", "--preset", "device-104p5", "--out", str(tmp_path)]) == 0
    omega = float(capsys.readouterr().out.split()[1])
    assert omega == pytest.approx(1.0, rel=0.01)
    assert (tmp_path / "rabi.svg").read_text().lstrip().startswith("<?xml")
    assert main(["rabi-power", "--preset", "device-104p5", "--out", str(tmp_path), "--format", "csv",
                 "--powers-dbm", "0", "5", "10"]) == 0
    lines = (tmp_path / "rabi_power.csv").read_text().splitlines()
    assert lines[0] == "power_dbm,power_mw,sqrt_power,strain,omega_model_mhz,omega_fit_mhz"
    assert len(lines) == 4
