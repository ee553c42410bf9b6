"""Shared fixtures and independent reference implementations for the test suite."""

import mpmath
import numpy as np
import pytest

from optoamp.model import (
    TWO_PI,
    CavityParams,
    DeviceModel,
    MechParams,
    PumpDrive,
    _cavity_diag,
    _mech_diag,
    amplifier_model,
    build_coupling_mats,
    sqrt_kappa_ext,
)

AMP_C = (1.27, 3.20, 1.33, 2.05)
AMP_DET = (TWO_PI * 600.0, -TWO_PI * 600.0)
AMP_PHI = 0.5440201938260216
ISO_C = (0.47, 0.74, 0.84, 0.96)
ISO_DET = (TWO_PI * 450.0, -TWO_PI * 405.0)
ISO_PHI = 0.6866967210116788


def device_cavities():
    return (CavityParams(TWO_PI * 3.89e9, TWO_PI * 406e3, TWO_PI * 197e3),
            CavityParams(TWO_PI * 5.63e9, TWO_PI * 115e3, TWO_PI * 233e3))


def device_mechs():
    return (MechParams(TWO_PI * 9.24e6, TWO_PI * 310.0), MechParams(TWO_PI * 9.82e6, TWO_PI * 290.0))


def amp_model(Phi=AMP_PHI, g0=None):
    return amplifier_model(device_cavities(), device_mechs(), *AMP_C, *AMP_DET, Phi, g0)


def iso_model(Phi=ISO_PHI, g0=None):
    return amplifier_model(device_cavities(), device_mechs(), *ISO_C, *ISO_DET, Phi, g0)


@pytest.fixture
def cavities():
    return device_cavities()


@pytest.fixture
def mechs():
    return device_mechs()


@pytest.fixture
def amp():
    return amp_model()


@pytest.fixture
def iso():
    return iso_model()


def random_full_model(rng, gamma=TWO_PI * 300.0):
    """Random model with all eight drives, C in [0, 3], delta in [-3 gamma, 3 gamma]."""
    cav = (CavityParams(TWO_PI * 4e9, TWO_PI * rng.uniform(50e3, 500e3), TWO_PI * rng.uniform(0, 300e3)),
           CavityParams(TWO_PI * 5e9, TWO_PI * rng.uniform(50e3, 500e3), TWO_PI * rng.uniform(0, 300e3)))
    mech = (MechParams(TWO_PI * 9e6, gamma * rng.uniform(0.5, 1.5)),
            MechParams(TWO_PI * 10e6, gamma * rng.uniform(0.5, 1.5)))
    dets = rng.uniform(-3, 3, 2) * np.array([m.gamma for m in mech])
    drives = []
    for i in (1, 2):
        for j in (1, 2):
            for sb in ("red", "blue"):
                C = rng.uniform(0, 3)
                g = np.sqrt(C * mech[j - 1].gamma * cav[i - 1].kappa / 4)
                drives.append(PumpDrive(i, j, sb, g, rng.uniform(-np.pi, np.pi), dets[j - 1]))
    return DeviceModel(cav, mech, tuple(drives))


# ---------------------------------------------------------------------------
# closed forms for the red-on-1 / blue-on-2 amplifier, written out by hand


def closed_form_T(model, w):
    m1, m2 = model.mechs
    d1, d2 = model.detunings
    chi1 = 1 / (m1.gamma / 2 - 1j * (w + d1))
    chi2 = 1 / (m2.gamma / 2 - 1j * (w + d2))
    G11, G12 = model.coupling(1, 1, "red"), model.coupling(1, 2, "red")
    J21, J22 = model.coupling(2, 1, "blue"), model.coupling(2, 2, "blue")
    T11 = abs(G11) ** 2 * chi1 + abs(G12) ** 2 * chi2
    T12 = G11 * J21 * chi1 + G12 * J22 * chi2
    T21 = -(np.conj(G11) * np.conj(J21) * chi1 + np.conj(G12) * np.conj(J22) * chi2)
    T22 = -(abs(J21) ** 2 * chi1 + abs(J22) ** 2 * chi2)
    return T11, T12, T21, T22


def closed_form_S(model, w):
    c1, c2 = model.cavities
    xc1 = 1 / (c1.kappa / 2 - 1j * w)
    xc2 = 1 / (c2.kappa / 2 - 1j * w)
    T11, T12, T21, T22 = closed_form_T(model, w)
    D = (1 + xc1 * T11) * (1 + xc2 * T22) - xc1 * xc2 * T12 * T21
    k1, k2 = c1.kappa_ext, c2.kappa_ext
    s11 = 1 - k1 * xc1 * (1 + xc2 * T22) / D
    s12 = np.sqrt(k1 * k2) * xc1 * xc2 * T12 / D
    s21 = np.sqrt(k1 * k2) * xc1 * xc2 * T21 / D
    s22 = 1 - k2 * xc2 * (1 + xc1 * T11) / D
    return s11, s12, s21, s22


def mp_mech_susceptibility(gamma, delta, omega):
    mpmath.mp.dps = 40
    return complex(1 / (mpmath.mpf(gamma) / 2 - 1j * (mpmath.mpf(omega) + mpmath.mpf(delta))))


def mp_cavity_susceptibility(kappa, omega):
    mpmath.mp.dps = 40
    return complex(1 / (mpmath.mpf(kappa) / 2 - 1j * mpmath.mpf(omega)))


# ---------------------------------------------------------------------------
# truncated Floquet solve of the manifold ladder


def floquet_scattering(model, w, dOmega, n_side=4):
    """S_opt on the probe manifold from the ladder n = -N..N, no perturbative truncation.

    A_n = Xi_c[w + n dO] (G B_n + G- B_{n-1} + G+ B_{n+1} + input on n = 0),
    B_n = Xi_m[w + n dO] (H A_n + H- A_{n-1} + H+ A_{n+1}).
    """
    from optoamp.nonrwa import leakage_mats

    G, H = build_coupling_mats(model)
    Gm, Gp, Hm, Hp = leakage_mats(model, dOmega)
    n = 2 * n_side + 1
    M = np.zeros((8 * n, 8 * n), dtype=complex)

    def a(k):
        return 8 * (k + n_side)

    for k in range(-n_side, n_side + 1):
        wk = np.asarray(w + k * dOmega)
        i, b = a(k), a(k) + 4
        M[i:i + 4, i:i + 4] = np.diag(1 / _cavity_diag(model, wk))
        M[b:b + 4, b:b + 4] = np.diag(1 / _mech_diag(model, wk))
        M[i:i + 4, b:b + 4] -= G
        M[b:b + 4, i:i + 4] -= H
        if k - 1 >= -n_side:
            M[i:i + 4, a(k - 1) + 4:a(k - 1) + 8] -= Gm
            M[b:b + 4, a(k - 1):a(k - 1) + 4] -= Hm
        if k + 1 <= n_side:
            M[i:i + 4, a(k + 1) + 4:a(k + 1) + 8] -= Gp
            M[b:b + 4, a(k + 1):a(k + 1) + 4] -= Hp
    sk = sqrt_kappa_ext(model)
    rhs = np.zeros((8 * n, 4), dtype=complex)
    rhs[a(0):a(0) + 4] = np.diag(sk)
    X = np.linalg.solve(M, rhs)
    return np.eye(4) - sk[:, None] * X[a(0):a(0) + 4]
