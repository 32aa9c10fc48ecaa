import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from soc1d.bandstructure import (
    FitError,
    InterfaceBandParams,
    Momentum2D,
    alpha_r_map,
    alpha_r_numeric,
    alpha_r_perturbative,
    band_energies,
    band_structure,
    build_h0,
    build_ha,
    build_haso,
    build_htot,
)

import oracles

momenta = st.floats(-1.5, 1.5, allow_nan=False)


def test_h0_at_gamma():
    h = build_h0(Momentum2D(0.0, 0.0), InterfaceBandParams())
    assert np.allclose(h, np.diag([0, 0, 0, 0, -250, -250]))


def test_h0_at_zone_quarter():
    p = InterfaceBandParams()
    kx = math.pi / (2 * p.a)
    d = np.diag(build_h0(Momentum2D(kx, 0.0), p)).real
    ref = oracles.h0_diagonal(kx, 0.0)
    assert d[0] == pytest.approx(ref[0], rel=1e-14)
    assert d[4] == pytest.approx(ref[2], rel=1e-14)


@given(momenta, momenta, st.floats(0, 300), st.floats(0, 1))
def test_h0_hermitian_real_diagonal(kx, ky, dez, frac):
    p = InterfaceBandParams(delta_e_z=dez, delta_e_y=frac * dez)
    h = build_h0(Momentum2D(kx, ky), p)
    assert np.allclose(h, h.conj().T)
    assert np.all(np.diag(h).imag == 0)
    assert np.allclose(np.diag(h).real, np.repeat(oracles.h0_diagonal(kx, ky, dez=p.delta_e_z, dey=p.delta_e_y), 2))


def test_haso_spectrum():
    p = InterfaceBandParams()
    h = build_haso(p)
    assert np.allclose(h, h.conj().T)
    w = np.linalg.eigvalsh(h)
    assert np.allclose(w, np.array(oracles.HASO_EIG_UNITS) * p.delta_aso, atol=1e-12)


def test_haso_zero():
    assert not np.any(build_haso(InterfaceBandParams(delta_aso=0.0)))


def test_ha_entries():
    p = InterfaceBandParams()
    h = build_ha(Momentum2D(0.1, 0.0), p)
    nz = np.argwhere(np.abs(h) > 0)
    orbitals = {(i // 2, j // 2) for i, j in nz}
    assert orbitals == {(0, 2), (2, 0)}
    assert np.allclose(np.abs(h[np.abs(h) > 0]), oracles.HA_ENTRY_K01)
    assert not np.any(build_ha(Momentum2D(0.0, 0.0), p))
    assert not np.any(build_ha(Momentum2D(0.3, 0.2), InterfaceBandParams(delta_z=0.0)))


@settings(max_examples=50)
@given(momenta, momenta)
def test_htot_hermitian_and_time_reversal(kx, ky):
    p = InterfaceBandParams()
    h = build_htot(Momentum2D(kx, ky), p)
    assert np.allclose(h, h.conj().T)
    e_plus = band_energies(Momentum2D(kx, ky), p)
    e_minus = band_energies(Momentum2D(-kx, -ky), p)
    assert np.allclose(e_plus, e_minus, atol=1e-9)


def test_no_soc_gives_degenerate_parabolas():
    p = InterfaceBandParams(delta_aso=0.0, delta_z=0.0)
    kx = np.linspace(-0.8, 0.8, 17)
    e = band_structure(kx, p)
    ref = np.sort(np.repeat(np.array(oracles.h0_diagonal(kx, 0.0)).T, 2, axis=1), axis=1)
    assert np.allclose(e, ref, atol=1e-10)


def test_gamma_lowest_doublet():
    p = InterfaceBandParams()
    e = band_energies(Momentum2D(0.0, 0.0), p)
    assert e[1] - e[0] < 1e-10
    assert abs(e[0] + p.delta_e_z) < 0.05 * p.delta_e_z
    # second-order shift pushes the doublet below -dE_z
    assert e[0] < -p.delta_e_z


def test_spin_degeneracy_lifted():
    e = band_energies(Momentum2D(0.05, 0.0), InterfaceBandParams())
    assert e[1] - e[0] > 1e-3


def test_band_structure_matches_pointwise():
    p = InterfaceBandParams(delta_e_y=40.0)
    kx = np.linspace(-0.3, 0.3, 7)
    e = band_structure(kx, p, ky=0.1)
    for i, k in enumerate(kx):
        assert np.allclose(e[i], band_energies(Momentum2D(k, 0.1), p))


def test_perturbative_value():
    assert alpha_r_perturbative(InterfaceBandParams()) == pytest.approx(oracles.ALPHA_R_PERT_DEFAULT, abs=1e-12)
    assert alpha_r_perturbative(InterfaceBandParams(delta_aso=0.0)) == 0.0
    a1 = alpha_r_perturbative(InterfaceBandParams(delta_e_z=200.0))
    a2 = alpha_r_perturbative(InterfaceBandParams(delta_e_z=400.0))
    assert a2 == pytest.approx(a1 / 2)
    with pytest.raises(ValueError):
        alpha_r_perturbative(InterfaceBandParams(delta_e_z=0.0))


def test_numeric_alpha_zero_without_inversion_breaking():
    assert alpha_r_numeric(InterfaceBandParams(delta_z=0.0)) == pytest.approx(0.0, abs=1e-9)


def test_fit_and_projection_agree():
    p = InterfaceBandParams()
    fit = alpha_r_numeric(p, method="fit")
    proj = alpha_r_numeric(p, method="projection")
    assert fit == pytest.approx(proj, rel=1e-3)


def test_fit_rejects_nonlinear_window():
    # a window this wide leaves the linear regime of the splitting
    with pytest.raises(FitError) as exc:
        alpha_r_numeric(InterfaceBandParams(), k_window=1.5, rel_tol=1e-4, abs_tol=0.0)
    assert exc.value.residual > 0


def test_unknown_method():
    with pytest.raises(ValueError):
        alpha_r_numeric(InterfaceBandParams(), method="magic")


def test_params_validation():
    with pytest.raises(ValueError):
        InterfaceBandParams(delta_e_y=300.0, delta_e_z=250.0)
    with pytest.raises(ValueError):
        InterfaceBandParams(m_h=0.0)
    with pytest.raises(ValueError):
        InterfaceBandParams(delta_aso=-1.0)


def test_map_consistency():
    dey = np.array([0.0, 100.0, 250.0, 300.0])
    dez = np.array([250.0])
    res = alpha_r_map(dey, dez)
    assert res.alpha.shape == (1, 4)
    assert res.alpha[0, 0] == pytest.approx(alpha_r_numeric(InterfaceBandParams()), rel=1e-12)
    assert np.isnan(res.alpha[0, 3])  # dE_y > dE_z is outside the model
    assert res.alpha[0, 0] > res.alpha[0, 1] > res.alpha[0, 2]
    assert res.alpha[0, 2] < 1e-3
