"""First-order corrections from pump tones acting on the mechanical mode they do not target.

Every pump drives both oscillators.  The unintended interaction oscillates
at ``DeltaOmega = (Omega1 + delta1) - (Omega2 + delta2)`` and couples the
probe manifold at ``omega`` to cavity photons at ``omega -+ DeltaOmega``.
Keeping one excursion to a neighbouring manifold and back gives a corrected
coupling matrix

    T_eff = T - S0 Xi_c[omega - DeltaOmega] Y0 - X0 Xi_c[omega + DeltaOmega] R0

with ``S0 = -G Xi_m H-``, ``X0 = -G Xi_m H+``, ``R0 = -G- Xi_m H`` and
``Y0 = -G+ Xi_m H``.  The leakage matrices carry the same ``i`` prefactor as
G and H; since they always enter in pairs the overall sign of that prefactor
is immaterial.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from optoamp.errors import ConfigurationError, DegenerateManifoldError
from optoamp.model import (
    DeviceModel,
    S_INDEX,
    SParamPoint,
    SweepResult,
    _cavity_diag,
    _coupling_T_batch,
    _mech_diag,
    build_coupling_mats,
    scattering_batch,
)


@dataclass(frozen=True)
class SidebandLeakage:
    """Couplings of each pump to the mechanical mode it does not target.

    ``G_tilde[i-1, j-1]`` is the red-sideband coupling of cavity i to mode j
    produced by the pump aimed at the other mode; ``J_tilde`` likewise for
    blue pumps.
    """

    G_tilde: np.ndarray
    J_tilde: np.ndarray
    delta_omega: float


def delta_omega(model: DeviceModel) -> float:
    """Spacing (Omega1 + delta1) - (Omega2 + delta2) of the sideband manifolds."""
    (m1, m2), (d1, d2) = model.mechs, model.detunings
    return float((m1.Omega + d1) - (m2.Omega + d2))


def _resolve_delta_omega(model: DeviceModel, dOmega: Optional[float]) -> float:
    dO = delta_omega(model) if dOmega is None else float(dOmega)
    if dO == 0:
        raise DegenerateManifoldError("sideband manifolds coincide (DeltaOmega = 0)")
    return dO


def sideband_leakage(model: DeviceModel, dOmega: Optional[float] = None) -> SidebandLeakage:
    """Tilde couplings, e.g. G~11 = G12 * g0_11 / g0_12 (same pump, other mode)."""
    if model.g0_ratios is None:
        raise ConfigurationError("beyond-RWA corrections need g0_ratios", field="g0_ratios")
    g0 = np.asarray(model.g0_ratios, dtype=float)
    Gt = np.zeros((2, 2), dtype=complex)
    Jt = np.zeros((2, 2), dtype=complex)
    for i in (1, 2):
        for j in (1, 2):
            other = 3 - j
            ratio = g0[i - 1, j - 1] / g0[i - 1, other - 1]
            Gt[i - 1, j - 1] = model.coupling(i, other, "red") * ratio
            Jt[i - 1, j - 1] = model.coupling(i, other, "blue") * ratio
    return SidebandLeakage(Gt, Jt, _resolve_delta_omega(model, dOmega))


def leakage_mats(model: DeviceModel, dOmega: Optional[float] = None):
    """Inter-manifold coupling matrices ``(G-, G+, H-, H+)``.

    ``G-`` feeds photons on manifold n from phonons on n-1, ``G+`` from
    phonons on n+1; ``H-`` and ``H+`` feed phonons from photons likewise.
    Rows and columns follow the photonic / phononic basis order.
    """
    lk = sideband_leakage(model, dOmega)
    G, J = lk.G_tilde, lk.J_tilde
    c = np.conj
    Gm = np.array([
        [0, J[0, 0], G[0, 1], 0],
        [0, -c(G[0, 0]), -c(J[0, 1]), 0],
        [0, J[1, 0], G[1, 1], 0],
        [0, -c(G[1, 0]), -c(J[1, 1]), 0],
    ], dtype=complex)
    Gp = np.array([
        [G[0, 0], 0, 0, J[0, 1]],
        [-c(J[0, 0]), 0, 0, -c(G[0, 1])],
        [G[1, 0], 0, 0, J[1, 1]],
        [-c(J[1, 0]), 0, 0, -c(G[1, 1])],
    ], dtype=complex)
    Hm = np.zeros((4, 4), dtype=complex)
    Hm[0] = [c(G[0, 0]), J[0, 0], c(G[1, 0]), J[1, 0]]
    Hm[3] = [-c(J[0, 1]), -G[0, 1], -c(J[1, 1]), -G[1, 1]]
    Hp = np.zeros((4, 4), dtype=complex)
    Hp[1] = [-c(J[0, 0]), -G[0, 0], -c(J[1, 0]), -G[1, 0]]
    Hp[2] = [c(G[0, 1]), J[0, 1], c(G[1, 1]), J[1, 1]]
    return 1j * Gm, 1j * Gp, 1j * Hm, 1j * Hp


def _correction_mats_batch(model, omega, dOmega):
    G, H = build_coupling_mats(model)
    Gm, Gp, Hm, Hp = leakage_mats(model, dOmega)
    xm = _mech_diag(model, omega)
    S0 = -np.einsum("ik,nk,kj->nij", G, xm, Hm)
    X0 = -np.einsum("ik,nk,kj->nij", G, xm, Hp)
    R0 = -np.einsum("ik,nk,kj->nij", Gm, xm, H)
    Y0 = -np.einsum("ik,nk,kj->nij", Gp, xm, H)
    return S0, X0, R0, Y0


def correction_mats(model: DeviceModel, omega: float, dOmega: Optional[float] = None):
    """``(S0, X0, R0, Y0)`` at probe detuning ``omega``."""
    mats = _correction_mats_batch(model, np.atleast_1d(float(omega)), dOmega)
    return tuple(m[0] for m in mats)


def _correction_batch(model, omega, dOmega):
    dO = _resolve_delta_omega(model, dOmega)
    S0, X0, R0, Y0 = _correction_mats_batch(model, omega, dO)
    lower = np.einsum("nik,nk,nkj->nij", S0, _cavity_diag(model, omega - dO), Y0)
    upper = np.einsum("nik,nk,nkj->nij", X0, _cavity_diag(model, omega + dO), R0)
    return -(lower + upper)


def correction(model: DeviceModel, omega: float, dOmega: Optional[float] = None) -> np.ndarray:
    """T_eff - T at one probe detuning."""
    return _correction_batch(model, np.atleast_1d(float(omega)), dOmega)[0]


def corrected_T_batch(model: DeviceModel, omega, dOmega: Optional[float] = None) -> np.ndarray:
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    return _coupling_T_batch(model, omega) + _correction_batch(model, omega, dOmega)


def corrected_T(model: DeviceModel, omega: float, dOmega: Optional[float] = None) -> np.ndarray:
    return corrected_T_batch(model, float(omega), dOmega)[0]


def corrected_sweep(model: DeviceModel, omega, dOmega: Optional[float] = None,
                    check: bool = True) -> SweepResult:
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    S, _ = scattering_batch(model, omega, T=corrected_T_batch(model, omega, dOmega), check=check)
    return SweepResult(omega, *(S[:, i, j] for i, j in S_INDEX.values()))


def corrected_s_params(model: DeviceModel, omega: float, dOmega: Optional[float] = None) -> SParamPoint:
    return corrected_sweep(model, float(omega), dOmega).point(0)


def scalar_corrections(model: DeviceModel, omega: float, dOmega: Optional[float] = None):
    """Explicit (Delta T11, Delta T12) for the red-on-1 / blue-on-2 amplifier.

    Each mode's susceptibility is dressed by the off-target pumps: the red
    tone on cavity 1 adds damping, the blue tone on cavity 2 removes it.
    """
    lk = sideband_leakage(model, dOmega)
    dO = lk.delta_omega
    cav1, cav2 = model.cavities
    m1, m2 = model.mechs
    d1, d2 = model.detunings
    chi_m1 = 1.0 / (m1.gamma / 2 - 1j * (omega + d1))
    chi_m2 = 1.0 / (m2.gamma / 2 - 1j * (omega + d2))

    def chi_c(cav, w):
        return 1.0 / (cav.kappa / 2 - 1j * w)

    dress1 = chi_m1**2 * (abs(lk.G_tilde[0, 0])**2 * chi_c(cav1, omega - dO)
                          - abs(lk.J_tilde[1, 0])**2 * chi_c(cav2, omega - dO))
    dress2 = chi_m2**2 * (abs(lk.G_tilde[0, 1])**2 * chi_c(cav1, omega + dO)
                          - abs(lk.J_tilde[1, 1])**2 * chi_c(cav2, omega + dO))
    G11, G12 = model.coupling(1, 1, "red"), model.coupling(1, 2, "red")
    J21, J22 = model.coupling(2, 1, "blue"), model.coupling(2, 2, "blue")
    dT11 = -(abs(G11)**2 * dress1 + abs(G12)**2 * dress2)
    dT12 = -(G11 * J21 * dress1 + G12 * J22 * dress2)
    return complex(dT11), complex(dT12)
