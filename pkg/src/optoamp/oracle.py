"""Direct solve of the un-eliminated photon + phonon system.

The 8x8 system is assembled drive by drive from the Heisenberg-Langevin
equations of motion, without going through the 4x4 coupling matrices, so it
serves as an independent check of the phonon elimination in
:mod:`optoamp.model`.  Unknowns are ordered ``(a1, a1+, a2, a2+, b1, b1+,
b2, b2+)``.
"""

from __future__ import annotations

import numpy as np

from optoamp.errors import SingularSystemError
from optoamp.model import RCOND_MIN, S_INDEX, DeviceModel, SParamPoint

_A = {(1, False): 0, (1, True): 1, (2, False): 2, (2, True): 3}
_B = {(1, False): 4, (1, True): 5, (2, False): 6, (2, True): 7}


def dynamics_matrix(model: DeviceModel) -> np.ndarray:
    """Frequency-independent part M0 of the system matrix M(omega) = M0 - i omega.

    Each row reads ``(decay - i omega) x - sum(couplings) = inputs``.  For
    a red drive G on (cavity i, mode j) the interaction is
    ``-(G a_i^+ b_j + G* a_i b_j^+)``, for a blue drive J it is
    ``-(J a_i^+ b_j^+ + J* a_i b_j)``.
    """
    M = np.zeros((8, 8), dtype=complex)
    for i, cav in enumerate(model.cavities, start=1):
        M[_A[i, False], _A[i, False]] = cav.kappa / 2
        M[_A[i, True], _A[i, True]] = cav.kappa / 2
    for j, mech in enumerate(model.mechs, start=1):
        delta = model.detuning(j)
        M[_B[j, False], _B[j, False]] = mech.gamma / 2 - 1j * delta
        M[_B[j, True], _B[j, True]] = mech.gamma / 2 + 1j * delta
    for d in model.drives:
        i, j, c = d.cavity, d.mech, d.amplitude
        a, ad = _A[i, False], _A[i, True]
        b, bd = _B[j, False], _B[j, True]
        if d.sideband == "red":
            # da/dt = ... + i G b,   db/dt = ... + i G* a, and conjugates
            M[a, b] -= 1j * c
            M[ad, bd] -= -1j * np.conj(c)
            M[b, a] -= 1j * np.conj(c)
            M[bd, ad] -= -1j * c
        else:
            # da/dt = ... + i J b+,  db/dt = ... + i J a+, and conjugates
            M[a, bd] -= 1j * c
            M[ad, b] -= -1j * np.conj(c)
            M[b, ad] -= 1j * c
            M[bd, a] -= -1j * np.conj(c)
    return M


def system_matrix(model: DeviceModel, omega: float) -> np.ndarray:
    return dynamics_matrix(model) - 1j * omega * np.eye(8)


def direct_scattering_matrix(model: DeviceModel, omega: float) -> np.ndarray:
    """Full 4x4 S_opt obtained from the 8x8 solve and the input-output relation."""
    M = system_matrix(model, omega)
    s = np.linalg.svd(M, compute_uv=False)
    rc = s[-1] / s[0] if s[0] > 0 else 0.0
    if not rc >= RCOND_MIN:
        raise SingularSystemError(float(omega), float(rc))
    k1, k2 = (c.kappa_ext for c in model.cavities)
    sk = np.sqrt(np.array([k1, k1, k2, k2]))
    rhs = np.zeros((8, 4), dtype=complex)
    rhs[:4] = np.diag(sk)
    X = np.linalg.solve(M, rhs)
    # a_out = a_in - sqrt(kappa_e) a
    return np.eye(4) - sk[:, None] * X[:4]


def direct_solve_oracle(model: DeviceModel, omega: float) -> SParamPoint:
    S = direct_scattering_matrix(model, omega)
    return SParamPoint(float(omega), *(complex(S[i, j]) for i, j in S_INDEX.values()))


def oracle_deviation(model: DeviceModel, omega) -> np.ndarray:
    """Largest relative deviation between eliminated and direct S_opt, per omega."""
    from optoamp.model import scattering_batch

    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    S, _ = scattering_batch(model, omega)
    out = np.empty(len(omega))
    for k, w in enumerate(omega):
        D = direct_scattering_matrix(model, w)
        scale = max(np.abs(D).max(), 1e-300)
        out[k] = np.abs(S[k] - D).max() / scale
    return out
