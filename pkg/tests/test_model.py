import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nvtensor import model as m
from nvtensor.model import (
    DissipatorSpec,
    Geometry,
    InteractionForm,
    ModelSpec,
    NVSiteParams,
    PhysicalConstants,
    mhz,
)

SX, SY, SZ = m.spin1_operators()


def idx2(m1, m2):
    """Two-site basis index for magnetic quantum numbers (basis +1, 0, -1)."""
    return 3 * (1 - m1) + (1 - m2)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


# --- spin operators


def test_spin_matrices_match_printed_form():
    s = 1 / np.sqrt(2)
    np.testing.assert_array_equal(SZ, np.diag([1, 0, -1]))
    np.testing.assert_allclose(SX, s * np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]]))
    np.testing.assert_allclose(SY, s * 1j * np.array([[0, -1, 0], [1, 0, -1], [0, 1, 0]]))


def test_spin_algebra():
    np.testing.assert_allclose(SX @ SY - SY @ SX, 1j * SZ, atol=1e-15)
    np.testing.assert_allclose(SY @ SZ - SZ @ SY, 1j * SX, atol=1e-15)
    np.testing.assert_allclose(SX @ SX + SY @ SY + SZ @ SZ, 2 * np.eye(3), atol=1e-15)
    for s in (SX, SY, SZ):
        np.testing.assert_allclose(s, s.conj().T)


# --- single site


def test_resonant_hamiltonian_diagonal():
    c = PhysicalConstants()
    params = NVSiteParams.resonant(zeeman=0.5 * mhz(407.0), rabi=0.0, constants=c)
    h = m.single_site_hamiltonian(params, c)
    np.testing.assert_allclose(np.diag(h).real, [mhz(407.0), 0.0, 0.0], atol=1e-9)


def test_hamiltonian_vanishes_without_drive_or_field():
    c = PhysicalConstants()
    h = m.single_site_hamiltonian(NVSiteParams(zeeman=0.0, rabi=0.0, drive=c.D), c)
    np.testing.assert_array_equal(h, np.zeros((3, 3)))


def test_drive_off_diagonal_elements():
    c = PhysicalConstants()
    rabi = mhz(2.0)
    h = m.single_site_hamiltonian(NVSiteParams(zeeman=0.0, rabi=rabi, drive=c.D), c)
    expected = rabi / (2 * np.sqrt(2))
    for a, b in [(0, 1), (1, 0), (1, 2), (2, 1)]:
        assert h[a, b] == pytest.approx(expected, abs=1e-14)
    assert h[0, 2] == 0


def test_negative_rabi_rejected():
    with pytest.raises(ValueError):
        NVSiteParams(zeeman=0.0, rabi=-1.0, drive=0.0)


def test_default_constants():
    c = PhysicalConstants()
    assert c.D == 2 * np.pi * 2870
    assert c.J0 == 2 * np.pi * 52


# --- geometry and couplings


def test_chain_coupling_at_one_and_a_half_nm():
    geo = Geometry.chain(3, 1.5)
    c, q = m.dipole_coupling_constant(geo, 0, 1)
    assert q == pytest.approx(1.0, abs=1e-14)
    assert abs(c - mhz(15.41)) < mhz(0.01)


def test_perpendicular_axis_gives_minus_one():
    geo = Geometry(np.array([[0, 0, 0], [1.0, 0, 0]]), np.array([[0, 0, 1.0]] * 2))
    c, q = m.dipole_coupling_constant(geo, 0, 1)
    assert q == pytest.approx(-1.0)
    assert c == pytest.approx(-PhysicalConstants().J0)


def test_magic_angle_gives_zero():
    axis = unit([1, 1, 1])
    geo = Geometry(np.array([[0, 0, 0], [2.0, 0, 0]]), np.array([axis, axis]))
    c, q = m.dipole_coupling_constant(geo, 0, 1)
    assert abs(q) < 1e-15 and abs(c) < 1e-12


def test_same_site_is_error():
    geo = Geometry.chain(2, 2.0)
    for fn in (m.effective_pair_term, m.lab_frame_pair_term):
        with pytest.raises(ValueError):
            fn(0, 0, geo)
    with pytest.raises(ValueError):
        m.dipole_coupling_constant(geo, 1, 1)


def test_geometry_validation():
    with pytest.raises(ValueError):
        Geometry(np.zeros((2, 3)) + [[0, 0, 0], [1, 0, 0]], np.array([[0, 0, 2.0], [0, 0, 1.0]]))
    with pytest.raises(ValueError):
        Geometry(np.zeros((2, 3)), np.array([[0, 0, 1.0]] * 2))


vectors = st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda v: np.linalg.norm(v) > 0.1)


@settings(max_examples=50, deadline=None)
@given(vectors, vectors, st.floats(0.5, 10.0))
def test_coupling_scales_as_inverse_cube(direction, axis, r):
    direction, axis = unit(direction), unit(axis)
    geo1 = Geometry(np.array([[0, 0, 0], r * direction]), np.array([axis, axis]))
    geo2 = Geometry(np.array([[0, 0, 0], 2 * r * direction]), np.array([axis, axis]))
    c1, q1 = m.dipole_coupling_constant(geo1, 0, 1)
    c2, q2 = m.dipole_coupling_constant(geo2, 0, 1)
    assert q1 == pytest.approx(q2, abs=1e-12)
    if abs(q1) > 1e-6:
        assert c1 / c2 == pytest.approx(8.0, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(vectors, vectors)
def test_same_group_q_is_legendre(direction, axis):
    direction, axis = unit(direction), unit(axis)
    geo = Geometry(np.array([[0, 0, 0], 3.0 * direction]), np.array([axis, axis]))
    _, q = m.dipole_coupling_constant(geo, 0, 1)
    cos = direction @ axis
    assert q == pytest.approx(3 * cos**2 - 1, abs=1e-14)


# --- pair terms


def test_effective_flip_flop_element():
    geo = Geometry.chain(2, 2.0)
    c, _ = m.dipole_coupling_constant(geo, 0, 1)
    h = m.effective_pair_term(0, 1, geo)
    assert h[idx2(-1, 0), idx2(0, -1)] == pytest.approx(c / 2, abs=1e-13)
    assert h[idx2(1, 1), idx2(1, 1)] == pytest.approx(-c, abs=1e-13)


def test_effective_term_conserves_magnetization():
    geo = Geometry.chain(2, 1.5)
    h = m.effective_pair_term(0, 1, geo)
    total = np.kron(SZ, np.eye(3)) + np.kron(np.eye(3), SZ)
    assert np.abs(h @ total - total @ h).max() < 1e-13
    np.testing.assert_allclose(h, h.conj().T, atol=1e-13)


def test_lab_frame_term_properties():
    geo = Geometry.chain(2, 1.0)
    h = m.lab_frame_pair_term(0, 1, geo)
    assert np.abs(h - h.conj().T).max() < 1e-13
    assert abs(np.trace(h)) < 1e-12


def test_lab_frame_along_axis():
    z = np.array([0, 0, 1.0])
    geo = Geometry(np.array([[0, 0, 0], [0, 0, 2.0]]), np.array([z, z]))
    h = m.lab_frame_pair_term(0, 1, geo)
    dot = sum(np.kron(s, s) for s in (SX, SY, SZ))
    expected = -(PhysicalConstants().J0 / 8.0) * (3 * np.kron(SZ, SZ) - dot)
    np.testing.assert_allclose(h, expected, atol=1e-12)


@pytest.mark.parametrize("spacing", [0.5, 1.5, 4.0])
def test_effective_term_is_secular_part_of_lab_term(spacing):
    geo = Geometry.chain(2, spacing)
    lab = m.lab_frame_pair_term(0, 1, geo)
    total = np.diag(np.kron(SZ, np.eye(3)) + np.kron(np.eye(3), SZ)).real
    secular = np.where(np.equal.outer(total, total), lab, 0)
    np.testing.assert_allclose(secular, m.effective_pair_term(0, 1, geo), atol=1e-10)


# --- superoperator terms


def test_vectorization_round_trip():
    rng = np.random.default_rng(1)
    rho = rng.normal(size=(9, 9)) + 1j * rng.normal(size=(9, 9))
    assert np.array_equal(m.unvectorize(m.vectorize(rho)), rho)
    a, b = rng.normal(size=(2, 9, 9))
    np.testing.assert_allclose(
        m.vectorize(a @ rho @ b), np.kron(a, b.T) @ m.vectorize(rho), atol=1e-12
    )


def test_unitary_model_has_only_hamiltonian_terms():
    model = ModelSpec.chain(3, 2.0, gamma=0.0)
    terms = m.build_superop_terms(model)
    assert {t.label for t in terms} == {"hamiltonian", "dipolar"}
    assert sum(1 for t in terms if len(t.sites) == 2) == 3


def test_single_site_dephasing_spectrum():
    gamma = 0.7
    op = m.dissipator_superop(SZ, gamma)
    idr = np.eye(3).reshape(-1)
    assert np.abs(idr @ op).max() < 1e-15
    for k in range(3):
        proj = np.zeros((3, 3))
        proj[k, k] = 1
        assert np.abs(op @ proj.reshape(-1)).max() < 1e-15
    rho = np.zeros((3, 3), dtype=complex)
    rho[1, 2] = 1.0  # |0><-1|
    np.testing.assert_allclose(op @ rho.reshape(-1), -gamma / 2 * rho.reshape(-1), atol=1e-15)
    rho = np.zeros((3, 3), dtype=complex)
    rho[0, 2] = 1.0  # |+1><-1|
    np.testing.assert_allclose(op @ rho.reshape(-1), -2 * gamma * rho.reshape(-1), atol=1e-15)


@pytest.mark.parametrize("form", list(InteractionForm))
def test_term_list_matches_kronecker_liouvillian(form):
    model = ModelSpec.chain(3, 2.0, gamma=1.0, interaction_form=form)
    from_terms = m.dense_from_terms(m.build_superop_terms(model), 3, 9)
    direct = m.dense_liouvillian(model)
    assert np.abs(from_terms - direct).max() < 1e-12 * np.abs(direct).max()


@pytest.mark.parametrize("n", [1, 2, 3])
def test_dense_liouvillian_preserves_trace_and_hermiticity(n):
    rng = np.random.default_rng(n)
    model = ModelSpec.chain(n, 1.5, gamma=2.0)
    lv = m.dense_liouvillian(model)
    x = rng.normal(size=(3**n, 3**n)) + 1j * rng.normal(size=(3**n, 3**n))
    rho = x @ x.conj().T
    rho /= np.trace(rho)
    perm = m.grouped_permutation(n)
    out = np.empty(9**n, dtype=complex)
    out[perm] = lv @ m.vectorize(rho)[perm]
    drho = out.reshape(3**n, 3**n)
    assert abs(np.trace(drho)) < 1e-12 * np.abs(lv).max()
    np.testing.assert_allclose(drho, drho.conj().T, atol=1e-9)


def test_all_hamiltonians_hermitian():
    model = ModelSpec.chain(3, 0.8, interaction_form="lab_frame")
    for t in m.hamiltonian_terms(model):
        assert np.abs(t.matrix - t.matrix.conj().T).max() < 1e-13


def test_model_consistency_checks():
    geo = Geometry.chain(2, 2.0)
    site = NVSiteParams.resonant(1.0, 1.0)
    with pytest.raises(ValueError):
        ModelSpec(sites=(site,), geometry=geo)
    with pytest.raises(ValueError):
        ModelSpec(sites=(site, site), geometry=geo, dissipators=(DissipatorSpec(5, 1.0),))
    with pytest.raises(ValueError):
        DissipatorSpec(0, -1.0)


def test_zeeman_shift_keeps_drive():
    model = ModelSpec.chain(2, 2.0)
    shifted = model.with_zeeman_shift(0.3)
    for a, b in zip(model.sites, shifted.sites):
        assert b.zeeman == pytest.approx(a.zeeman + 0.3)
        assert b.drive == a.drive
