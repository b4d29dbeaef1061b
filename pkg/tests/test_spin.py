import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hodsar.errors import DataError, NotHermitian
from hodsar.spin import (
    ZERO_FIELD_UNITARY,
    Hamiltonian,
    StrainCouplings,
    StrainField,
    ZfsParams,
    eigensystem,
    resonance_detuning,
    spin1_operators,
    strain_hamiltonian,
    transition_frequency,
    transition_table,
    zfs_hamiltonian,
)

finite = st.floats(-1e4, 1e4, allow_nan=False)
strain = st.floats(-1e-3, 1e-3, allow_nan=False)
coupling = st.floats(-1e7, 1e7, allow_nan=False)


def hand_spin1():
    # written out independently of the package
    r = 1 / np.sqrt(2)
    sx = np.array([[0, r, 0], [r, 0, r], [0, r, 0]], dtype=complex)
    sy = np.array([[0, -1j * r, 0], [1j * r, 0, -1j * r], [0, 1j * r, 0]])
    sz = np.diag([1, 0, -1]).astype(complex)
    return sx, sy, sz


def test_sz_is_diagonal():
    assert np.array_equal(spin1_operators().sz, np.diag([1, 0, -1]))


def test_operators_match_hand_matrices():
    s = spin1_operators()
    for a, b in zip((s.sx, s.sy, s.sz), hand_spin1()):
        np.testing.assert_allclose(a, b, atol=1e-15)


def test_su2_algebra():
    s = spin1_operators()
    ops = {"x": s.sx, "y": s.sy, "z": s.sz}
    for a, b, c in (("x", "y", "z"), ("y", "z", "x"), ("z", "x", "y")):
        comm = ops[a] @ ops[b] - ops[b] @ ops[a]
        np.testing.assert_allclose(comm, 1j * ops[c], atol=1e-12)
    casimir = s.sx @ s.sx + s.sy @ s.sy + s.sz @ s.sz
    np.testing.assert_allclose(casimir, 2 * np.eye(3), atol=1e-12)
    for m in ops.values():
        np.testing.assert_allclose(m, m.conj().T, atol=1e-12)


def test_rhombic_operator_flips_plus_one_to_minus_one():
    s = spin1_operators()
    out = (s.sx @ s.sx - s.sy @ s.sy) @ np.array([1, 0, 0])
    np.testing.assert_allclose(out, [0, 0, 1], atol=1e-15)


def test_zero_field_unitary_is_unitary():
    u = ZERO_FIELD_UNITARY
    np.testing.assert_allclose(u.conj().T @ u, np.eye(3), atol=1e-15)


def test_zero_zfs_is_zero():
    assert np.array_equal(zfs_hamiltonian(ZfsParams(0, 0)).matrix, np.zeros((3, 3)))


def test_zfs_spectrum_against_eigvalsh_oracle():
    d, e = 1400.0, 50.0
    sx, sy, sz = hand_spin1()
    oracle = np.sort(np.linalg.eigvalsh(d * (sz @ sz - 2 / 3 * np.eye(3)) + e * (sx @ sx - sy @ sy)))[::-1]
    es = eigensystem(zfs_hamiltonian(ZfsParams(d, e)))
    np.testing.assert_allclose(es.energies, oracle, rtol=1e-12)
    np.testing.assert_allclose(es.energies, [516.6666666666667, 416.6666666666667, -933.3333333333334],
                               rtol=1e-12)
    assert abs(es.energies[0] - es.energies[1]) == pytest.approx(100.0, rel=1e-12)


def test_labels_follow_cartesian_character():
    # Tx is the state annihilated by Sx, so it sits at D/3 - E
    es = eigensystem(zfs_hamiltonian(ZfsParams(1400, 50)))
    assert es.energy("Tx") == pytest.approx(1400 / 3 - 50)
    assert es.energy("Ty") == pytest.approx(1400 / 3 + 50)
    assert es.energy("Tz") == pytest.approx(-2 * 1400 / 3)
    s = spin1_operators()
    np.testing.assert_allclose(s.sx @ es.state("Tx"), 0, atol=1e-12)
    np.testing.assert_allclose(s.sy @ es.state("Ty"), 0, atol=1e-12)
    np.testing.assert_allclose(s.sz @ es.state("Tz"), 0, atol=1e-12)


def test_zero_matrix_is_degenerate():
    es = eigensystem(Hamiltonian(np.zeros((3, 3))))
    assert es.degenerate
    np.testing.assert_array_equal(es.energies, 0)
    np.testing.assert_allclose(es.states.conj().T @ es.states, np.eye(3), atol=1e-12)


def test_axial_zfs_is_degenerate():
    es = eigensystem(zfs_hamiltonian(ZfsParams(1400, 0)))
    assert es.degenerate
    assert es.energies[0] == pytest.approx(1400 / 3)
    assert es.energies[1] == pytest.approx(1400 / 3)


def test_non_hermitian_rejected():
    m = np.zeros((3, 3), dtype=complex)
    m[0, 1] = 1.0
    with pytest.raises(NotHermitian):
        eigensystem(Hamiltonian(m))


def test_large_rhombicity_warns():
    with pytest.warns(UserWarning):
        ZfsParams(100, 50)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ZfsParams(1400, 50)


def test_shear_term_scale():
    s = spin1_operators()
    op = s.sx @ s.sx - s.sy @ s.sy
    h = strain_hamiltonian(StrainField(exx=1e-6, eyy=-1e-6), StrainCouplings(g2=1e6, g3=0, g4=0, g5=0))
    np.testing.assert_allclose(h.matrix, 2 * op, atol=1e-12)
    assert h.norm == pytest.approx(2 * np.linalg.norm(op, 2))


def test_g1_is_inert():
    field = StrainField(exx=1e-5, eyy=2e-5, ezz=-3e-5, exy=1e-5)
    a = strain_hamiltonian(field, StrainCouplings(g1=0.0))
    b = strain_hamiltonian(field, StrainCouplings(g1=5e6))
    np.testing.assert_array_equal(a.matrix, b.matrix)


@given(e0=strain, g2=coupling, g3=coupling, g4=coupling, g5=coupling, g1=coupling)
def test_hydrostatic_strain_is_inert(e0, g2, g3, g4, g5, g1):
    h = strain_hamiltonian(StrainField.hydrostatic(e0), StrainCouplings(g2, g3, g4, g5, g1))
    assert np.max(np.abs(h.matrix)) == 0.0


@given(st.lists(strain, min_size=6, max_size=6), st.lists(coupling, min_size=4, max_size=4))
def test_strain_hamiltonian_is_hermitian(comps, gs):
    h = strain_hamiltonian(StrainField(*comps), StrainCouplings(*gs))
    assert np.max(np.abs(h.matrix - h.matrix.conj().T)) <= 1e-12 * max(1.0, h.norm)


@given(d=finite, e=finite)
def test_zfs_traceless(d, e):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        h = zfs_hamiltonian(ZfsParams(d, e))
    assert abs(np.trace(h.matrix)) <= 1e-12 * max(1.0, abs(d))
    es = eigensystem(h)
    assert abs(es.energies.sum()) <= 1e-9 * max(1.0, abs(d))


@settings(max_examples=50)
@given(d=st.floats(10, 5000), e=st.floats(0.1, 1000))
def test_eigensystem_residual_and_basis_invariance(d, e):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        h = zfs_hamiltonian(ZfsParams(d, e)) + strain_hamiltonian(
            StrainField(exy=1e-5, exz=-2e-5, exx=3e-5), StrainCouplings(1e6, 1e6, 1e6, 1e6))
    es = eigensystem(h)
    for k in range(3):
        v = es.states[:, k]
        assert np.linalg.norm(h.matrix @ v - es.energies[k] * v) <= 1e-9 * h.norm
    np.testing.assert_allclose(es.states.conj().T @ es.states, np.eye(3), atol=1e-10)
    es_zf = eigensystem(h.to_basis("zero_field"))
    np.testing.assert_allclose(es_zf.energies, es.energies, atol=1e-10)


def oracle_channel_matrix(d, e, term):
    # brute force: diagonalize with numpy, label by which Cartesian axis the
    # state is annihilated by, then read matrix elements
    sx, sy, sz = hand_spin1()
    h0 = d * (sz @ sz - 2 / 3 * np.eye(3)) + e * (sx @ sx - sy @ sy)
    _, v = np.linalg.eigh(h0)
    order = []
    for op in (sx, sy, sz):
        order.append(int(np.argmin([np.linalg.norm(op @ v[:, k]) for k in range(3)])))
    v = v[:, order]
    return v.conj().T @ term @ v


@pytest.mark.parametrize("which,pair", [("g3", (0, 1)), ("g4", (0, 2)), ("g5", (1, 2))])
def test_symmetry_channels_match_oracle(which, pair):
    s = spin1_operators()
    terms = {"g3": s.anticommutator("x", "y"), "g4": s.anticommutator("x", "z"),
             "g5": s.anticommutator("y", "z")}
    m = oracle_channel_matrix(1400, 50, terms[which])
    for i, j in itertools.combinations(range(3), 2):
        if (i, j) == pair:
            # Cartesian-basis matrices (S_a)_bc = -i eps_abc give |{S_a, S_b}_ba| = 1
            assert abs(m[i, j]) == pytest.approx(1.0, rel=1e-12)
        else:
            assert abs(m[i, j]) < 1e-12


def test_transition_table_channels():
    es = eigensystem(zfs_hamiltonian(ZfsParams(1400, 50)))
    g = StrainCouplings(g2=1e6, g3=1e6, g4=1e6, g5=1e6)
    rows = {r.pair: r for r in transition_table(es, strain_hamiltonian(StrainField(exy=1e-6), g))}
    s = spin1_operators()
    oracle = oracle_channel_matrix(1400, 50, 1e6 * 1e-6 * s.anticommutator("x", "y"))
    assert rows["xy"].matrix_element == pytest.approx(abs(oracle[0, 1]), rel=1e-12)
    assert rows["xz"].matrix_element < 1e-12
    assert rows["yz"].matrix_element < 1e-12
    shear = strain_hamiltonian(StrainField(exx=1e-6, eyy=-1e-6), g)
    for r in transition_table(es, shear):
        assert r.matrix_element < 1e-12


def test_transition_frequencies_undriven():
    es = eigensystem(zfs_hamiltonian(ZfsParams(1400, 50)))
    rows = transition_table(es, Hamiltonian(np.zeros((3, 3))))
    assert all(r.matrix_element == 0 for r in rows)
    freqs = {r.pair: r.f_transition for r in rows}
    assert freqs["xy"] == pytest.approx(100.0, rel=1e-12)
    assert sorted(freqs.values()) == pytest.approx([100.0, 1350.0, 1450.0], rel=1e-12)
    # Tx lies below Ty, so xz is the smaller of the two large gaps
    assert freqs["xz"] == pytest.approx(1350.0, rel=1e-12)


def test_resonance_detuning():
    rec = next(r for r in transition_table(eigensystem(zfs_hamiltonian(ZfsParams(1400, 50))),
                                           Hamiltonian(np.zeros((3, 3)))) if r.pair == "xy")
    assert resonance_detuning(100.0, rec) == pytest.approx(0.0, abs=1e-12)
    assert resonance_detuning(104.5, rec) == pytest.approx(4.5, abs=1e-12)
    assert resonance_detuning(rec.f_transition, rec) == 0.0
    with pytest.raises(DataError):
        resonance_detuning(0.0, rec)


def test_transition_frequency_helper():
    assert transition_frequency(ZfsParams(1400, 52.25)) == pytest.approx(104.5, rel=1e-12)
