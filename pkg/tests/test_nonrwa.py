import numpy as np
import pytest

from conftest import amp_model, device_cavities, device_mechs, floquet_scattering, random_full_model
from optoamp.errors import ConfigurationError, DegenerateManifoldError
from optoamp.model import (
    TWO_PI,
    DeviceModel,
    PumpDrive,
    amplifier_model,
    coupling_matrix_T,
    s_params,
    scattering_batch,
    sweep,
)
from optoamp.nonrwa import (
    corrected_s_params,
    corrected_sweep,
    corrected_T,
    correction,
    correction_mats,
    delta_omega,
    leakage_mats,
    scalar_corrections,
    sideband_leakage,
)
from optoamp.workpoint import isolation_point

G0 = ((1.0, 0.8), (1.1, 0.9))


def _s_with_T(model, w, T):
    return scattering_batch(model, np.atleast_1d(w), T=T[None])[0][0]


def _s_corrected(model, w, dO):
    return _s_with_T(model, w, corrected_T(model, w, dO))


def _floquet_errors(model, w, kappa, factors):
    rwa, first = [], []
    for f in factors:
        dO = f * kappa
        ref = floquet_scattering(model, w, dO, n_side=6)
        rwa.append(np.abs(_s_with_T(model, w, coupling_matrix_T(model, w)) - ref).max())
        first.append(np.abs(_s_corrected(model, w, dO) - ref).max())
    return np.array(rwa), np.array(first)


def test_first_order_against_floquet():
    m = amp_model(g0=G0)
    kappa = max(c.kappa for c in m.cavities)
    factors = [10, 20, 40, 80]
    rwa, first = _floquet_errors(m, TWO_PI * 150.0, kappa, factors)
    # RWA error falls as 1/dO, the corrected one as 1/dO^2
    assert (first < 0.25 * rwa).all()
    ratios = first[:-1] / first[1:]
    assert (ratios > 3.0).all()


def test_opposite_sign_is_worse():
    m = amp_model(g0=G0)
    kappa = max(c.kappa for c in m.cavities)
    w, dO = TWO_PI * 150.0, 20 * kappa
    ref = floquet_scattering(m, w, dO, n_side=6)
    wrong = _s_with_T(m, w, coupling_matrix_T(m, w) - correction(m, w, dO))
    right = _s_corrected(m, w, dO)
    assert np.abs(right - ref).max() < 0.1 * np.abs(wrong - ref).max()


def test_large_manifold_spacing_recovers_rwa():
    m = amp_model(g0=G0)
    kappa = max(c.kappa for c in m.cavities)
    w = np.linspace(-TWO_PI * 2000, TWO_PI * 2000, 41)
    a = corrected_sweep(m, w, 1e6 * kappa)
    b = sweep(m, w)
    sa = np.stack([a.s11, a.s12, a.s21, a.s22], axis=-1)
    sb = np.stack([b.s11, b.s12, b.s21, b.s22], axis=-1)
    assert (np.linalg.norm(sa - sb, axis=-1) / np.linalg.norm(sb, axis=-1) <= 1e-5).all()
    for x in w:
        T = coupling_matrix_T(m, x)
        assert np.linalg.norm(corrected_T(m, x, 1e6 * kappa) - T) / np.linalg.norm(T) <= 1e-5


def test_correction_scales_inversely():
    m = amp_model(g0=G0)
    kappa = max(c.kappa for c in m.cavities)
    gamma = max(x.gamma for x in m.mechs)
    w = np.linspace(-3 * gamma, 3 * gamma, 61)
    for f in (10, 20, 40):
        a = max(np.linalg.norm(correction(m, x, f * kappa)) for x in w)
        b = max(np.linalg.norm(correction(m, x, 2 * f * kappa)) for x in w)
        assert 1.9 <= a / b <= 2.1


@pytest.mark.parametrize("seed", range(6))
def test_scalar_matches_matrix(seed):
    rng = np.random.default_rng(seed)
    m = amp_model(Phi=rng.uniform(-np.pi, np.pi), g0=tuple(tuple(r) for r in rng.uniform(0.5, 1.5, (2, 2))))
    m = m.with_detunings(*(rng.uniform(-3, 3, 2) * np.array([x.gamma for x in m.mechs])))
    kappa = max(c.kappa for c in m.cavities)
    dO = rng.choice([-1, 1]) * rng.uniform(2, 50) * kappa
    for w in rng.uniform(-TWO_PI * 3000, TWO_PI * 3000, 5):
        dT = correction(m, w, dO)
        d11, d12 = scalar_corrections(m, w, dO)
        scale = np.abs(dT).max()
        assert abs(dT[0, 0] - d11) <= 1e-12 * scale
        assert abs(dT[0, 3] - d12) <= 1e-12 * scale


def test_phase_gauge_on_backward_element():
    m = amp_model(g0=G0)
    w, dO = TWO_PI * 50.0, -TWO_PI * 578.8e3
    base = abs(corrected_T(m, w, dO)[0, 3])
    for phi in (0.4, -1.3, 2.9):
        shifted = m.with_drives(d.__class__(d.cavity, d.mech, d.sideband, d.coupling, d.phase + phi, d.detuning)
                                for d in m.drives)
        assert abs(corrected_T(shifted, w, dO)[0, 3]) == pytest.approx(base, rel=1e-12)


def test_pattern_preserved():
    m = amp_model(g0=G0)
    T = corrected_T(m, TWO_PI * 10.0, -TWO_PI * 578.8e3)
    mask = np.array([[1, 0, 0, 1], [0, 1, 1, 0], [0, 1, 1, 0], [1, 0, 0, 1]], bool)
    assert np.all(T[~mask] == 0)


def test_missing_g0_raises():
    with pytest.raises(ConfigurationError):
        correction(amp_model(), 0.0)


def test_degenerate_manifold_raises():
    with pytest.raises(DegenerateManifoldError):
        correction(amp_model(g0=G0), 0.0, dOmega=0.0)


def test_fixture_manifold_spacing():
    m = amp_model(g0=G0)
    assert delta_omega(m) / TWO_PI == pytest.approx(-578.8e3, abs=1.0)


def test_fixture_breaks_isolation():
    # the first-order shift spoils the exact cancellation of the RWA point
    cav, mech = device_cavities(), device_mechs()
    wp = isolation_point(mech[0].gamma, mech[1].gamma, 0.7)
    m = amplifier_model(cav, mech, 1.5, 1.5, 1.0, 1.0, wp.delta1, wp.delta2, wp.Phi, G0)
    assert abs(s_params(m, 0.0).s12) < 1e-12
    assert abs(corrected_s_params(m, 0.0).s12) > 1e-6


def test_no_drives_no_correction():
    m = DeviceModel(amp_model().cavities, amp_model().mechs, (), G0)
    np.testing.assert_array_equal(correction(m, 0.0, 1e6), np.zeros((4, 4)))


def test_leakage_uses_other_mode_ratio():
    m = amp_model(g0=G0)
    lk = sideband_leakage(m)
    G12 = m.coupling(1, 2, "red")
    assert abs(lk.G_tilde[0, 0]) == pytest.approx(abs(G12) * G0[0][0] / G0[0][1])


def test_random_full_model_runs():
    rng = np.random.default_rng(8)
    m = random_full_model(rng)
    m = DeviceModel(m.cavities, m.mechs, m.drives, G0)
    T = corrected_T(m, 0.0, 30 * max(c.kappa for c in m.cavities))
    assert np.isfinite(T).all()


def test_leakage_zero_without_drives():
    m = DeviceModel(device_cavities(), device_mechs(), (), ((1, 1), (1, 1)))
    for M in leakage_mats(m, 1e6):
        np.testing.assert_array_equal(M, 0)


def test_single_red_drive_leakage():
    # red tone on cavity 1 aimed at mode 2 leaks onto mode 1 as G~11 = G12
    g = 3.0e4 * np.exp(0.3j)
    drive = PumpDrive(1, 2, "red", abs(g), np.angle(g), 0.0)
    m = DeviceModel(device_cavities(), device_mechs(), (drive,), ((1, 1), (1, 1)))
    Gm, Gp, Hm, Hp = leakage_mats(m, 1e6)
    exp_m = np.zeros((4, 4), complex)
    exp_m[1, 1] = -1j * np.conj(g)
    exp_p = np.zeros((4, 4), complex)
    exp_p[0, 0] = 1j * g
    np.testing.assert_allclose(Gm, exp_m, rtol=1e-15)
    np.testing.assert_allclose(Gp, exp_p, rtol=1e-15)
    assert np.count_nonzero(Hm) == 1 and Hm[0, 0] == pytest.approx(1j * np.conj(g))
    assert np.count_nonzero(Hp) == 1 and Hp[1, 1] == pytest.approx(-1j * g)


def test_fixture_leakage_pattern():
    m = amp_model(g0=((1, 1), (1, 1)))
    Gm, Gp, Hm, Hp = leakage_mats(m)
    # red pumps only on cavity 1, blue only on cavity 2
    assert set(zip(*np.nonzero(Gm))) == {(0, 2), (1, 1), (2, 1), (3, 2)}
    assert set(zip(*np.nonzero(Gp))) == {(0, 0), (1, 3), (2, 3), (3, 0)}
    assert set(zip(*np.nonzero(Hm))) == {(0, 0), (0, 3), (3, 1), (3, 2)}
    assert set(zip(*np.nonzero(Hp))) == {(1, 1), (1, 2), (2, 0), (2, 3)}


def test_correction_bilinear_in_couplings():
    a = amp_model(g0=G0)
    b = a.with_drives(PumpDrive(d.cavity, d.mech, d.sideband, 1.7 * d.coupling, d.phase, d.detuning)
                      for d in a.drives)
    for x, y in zip(correction_mats(a, 30.0, 1e6), correction_mats(b, 30.0, 1e6)):
        np.testing.assert_allclose(y, 1.7**2 * x, rtol=1e-13, atol=1e-20)
