"""Linearized two-cavity / two-oscillator optomechanical network.

All matrices live in the photonic basis ``(a1, a1+, a2, a2+)`` (``+`` marks the
creation operator) or the phononic basis ``(b1, b1+, b2, b2+)``, row-major,
as ``(4, 4)`` complex numpy arrays.  Rates and detunings are angular (rad/s);
the probe detuning ``omega`` is measured in the frame rotating with the
pumps.  Absolute cavity and mechanical frequencies are carried as metadata
for lab-frame bookkeeping and the beyond-RWA corrections only.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from optoamp.errors import ConfigurationError, SingularSystemError

TWO_PI = 2.0 * np.pi
BASIS = ("a1", "a1+", "a2", "a2+")
SIDEBANDS = ("red", "blue")

#: Matrices whose reciprocal condition number falls below this are singular.
RCOND_MIN = 1e-12

# Indices of the scalar S-parameters inside the 4x4 S_opt.
S_INDEX = {"s11": (0, 0), "s12": (0, 3), "s21": (3, 0), "s22": (3, 3)}


@dataclass(frozen=True)
class CavityParams:
    """Microwave cavity mode.

    ``omega`` is the absolute angular resonance frequency (metadata only),
    ``kappa_ext`` and ``kappa_int`` the external and internal decay rates.
    """

    omega: float
    kappa_ext: float
    kappa_int: float = 0.0

    def __post_init__(self):
        if not self.kappa_ext > 0:
            raise ConfigurationError("kappa_ext must be positive", field="kappa_ext")
        if not self.kappa_int >= 0:
            raise ConfigurationError("kappa_int must be non-negative", field="kappa_int")
        if not self.omega >= 0:
            raise ConfigurationError("omega must be non-negative", field="omega")

    @property
    def kappa(self) -> float:
        return self.kappa_ext + self.kappa_int

    @property
    def r(self) -> float:
        """Coupling ratio kappa_ext / kappa, 1 for a lossless cavity."""
        return self.kappa_ext / self.kappa


@dataclass(frozen=True)
class MechParams:
    Omega: float
    gamma: float

    def __post_init__(self):
        if not self.Omega > 0:
            raise ConfigurationError("Omega must be positive", field="Omega")
        if not self.gamma > 0:
            raise ConfigurationError("gamma must be positive", field="gamma")


@dataclass(frozen=True)
class PumpDrive:
    """One pump tone: a red or blue sideband of mechanical mode ``mech`` on
    cavity ``cavity`` (both 1-based).

    ``coupling`` is the multiphoton coupling magnitude |G| or |J| in rad/s,
    ``phase`` its argument and ``detuning`` the shared detuning delta_j of
    the addressed mechanical mode.
    """

    cavity: int
    mech: int
    sideband: str
    coupling: float
    phase: float = 0.0
    detuning: float = 0.0

    def __post_init__(self):
        if self.cavity not in (1, 2):
            raise ConfigurationError("cavity index must be 1 or 2", field="cavity")
        if self.mech not in (1, 2):
            raise ConfigurationError("mech index must be 1 or 2", field="mech")
        if self.sideband not in SIDEBANDS:
            raise ConfigurationError("sideband must be 'red' or 'blue'", field="sideband")
        if not self.coupling >= 0:
            raise ConfigurationError("coupling magnitude must be non-negative", field="coupling")

    @property
    def key(self) -> tuple[int, int, str]:
        return (self.cavity, self.mech, self.sideband)

    @property
    def amplitude(self) -> complex:
        return self.coupling * np.exp(1j * self.phase)


def coupling_from_cooperativity(C: float, gamma: float, kappa: float) -> float:
    """Coupling magnitude |G| such that 4|G|^2 / (gamma kappa) = C."""
    if C < 0:
        raise ConfigurationError("cooperativity must be non-negative", field="cooperativity")
    return float(np.sqrt(C * gamma * kappa / 4.0))


def cooperativity_from_coupling(g: float, gamma: float, kappa: float) -> float:
    return 4.0 * g * g / (gamma * kappa)


@dataclass(frozen=True)
class DeviceModel:
    """Two cavities, two mechanical modes and a set of pump drives.

    ``g0_ratios`` holds the relative single-photon couplings g0_ij as a 2x2
    nested tuple indexed ``[cavity-1][mech-1]``; only the beyond-RWA
    corrections read it.
    """

    cavities: tuple[CavityParams, CavityParams]
    mechs: tuple[MechParams, MechParams]
    drives: tuple[PumpDrive, ...] = ()
    g0_ratios: Optional[tuple[tuple[float, float], tuple[float, float]]] = None
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "cavities", tuple(self.cavities))
        object.__setattr__(self, "mechs", tuple(self.mechs))
        object.__setattr__(self, "drives", tuple(self.drives))
        if len(self.cavities) != 2 or len(self.mechs) != 2:
            raise ConfigurationError("model needs exactly two cavities and two mechanical modes")
        index = {}
        for d in self.drives:
            if d.key in index:
                raise ConfigurationError(f"duplicate drive {d.key}", field="drives")
            index[d.key] = d
        object.__setattr__(self, "_index", index)
        for j in (1, 2):
            dets = {d.detuning for d in self.drives if d.mech == j}
            if len(dets) > 1:
                raise ConfigurationError(
                    f"drives addressing mechanical mode {j} disagree on its detuning",
                    field="detuning",
                )
        if self.g0_ratios is not None:
            g0 = tuple(tuple(float(x) for x in row) for row in self.g0_ratios)
            if len(g0) != 2 or any(len(row) != 2 for row in g0) \
                    or min(x for row in g0 for x in row) <= 0:
                raise ConfigurationError("g0_ratios must be a 2x2 array of positive numbers",
                                         field="g0_ratios")
            object.__setattr__(self, "g0_ratios", g0)

    def drive(self, cavity: int, mech: int, sideband: str) -> Optional[PumpDrive]:
        return self._index.get((cavity, mech, sideband))

    def coupling(self, cavity: int, mech: int, sideband: str) -> complex:
        """Complex coupling G_ij (red) or J_ij (blue); zero for absent drives."""
        d = self._index.get((cavity, mech, sideband))
        return 0j if d is None else complex(d.amplitude)

    def cooperativity(self, cavity: int, mech: int, sideband: str) -> float:
        d = self._index.get((cavity, mech, sideband))
        if d is None:
            return 0.0
        return cooperativity_from_coupling(
            d.coupling, self.mechs[mech - 1].gamma, self.cavities[cavity - 1].kappa
        )

    def detuning(self, mech: int) -> float:
        for d in self.drives:
            if d.mech == mech:
                return d.detuning
        return 0.0

    @property
    def detunings(self) -> tuple[float, float]:
        return (self.detuning(1), self.detuning(2))

    @property
    def Phi(self) -> float:
        """Loop phase Arg(G11) + Arg(J21) - Arg(G12) - Arg(J22), wrapped to (-pi, pi]."""
        keys = [(1, 1, "red"), (2, 1, "blue"), (1, 2, "red"), (2, 2, "blue")]
        missing = [k for k in keys if k not in self._index]
        if missing:
            raise ConfigurationError(f"loop phase needs the amplifier drive set, missing {missing}")
        p = [self._index[k].phase for k in keys]
        return wrap_phase(p[0] + p[1] - p[2] - p[3])

    def replace(self, **changes) -> "DeviceModel":
        return dataclasses.replace(self, **changes)

    def with_drives(self, drives: Iterable[PumpDrive]) -> "DeviceModel":
        return self.replace(drives=tuple(drives))

    def with_detunings(self, delta1: float, delta2: float) -> "DeviceModel":
        dets = (delta1, delta2)
        return self.with_drives(
            dataclasses.replace(d, detuning=dets[d.mech - 1]) for d in self.drives
        )

    def with_phase(self, Phi: float, rotate=(1, 1, "red")) -> "DeviceModel":
        """Return a copy whose loop phase is ``Phi``, changing one drive's phase only."""
        sign = {(1, 1, "red"): 1, (2, 1, "blue"): 1, (1, 2, "red"): -1, (2, 2, "blue"): -1}[rotate]
        shift = sign * (Phi - self.Phi)
        return self.with_drives(
            dataclasses.replace(d, phase=d.phase + shift) if d.key == rotate else d
            for d in self.drives
        )

    def with_cooperativity(self, cavity: int, mech: int, sideband: str, C: float) -> "DeviceModel":
        g = coupling_from_cooperativity(C, self.mechs[mech - 1].gamma, self.cavities[cavity - 1].kappa)
        d = self._index.get((cavity, mech, sideband))
        if d is None:
            new = PumpDrive(cavity, mech, sideband, g, 0.0, self.detuning(mech))
            return self.with_drives(self.drives + (new,))
        return self.with_drives(
            dataclasses.replace(x, coupling=g) if x.key == d.key else x for x in self.drives
        )


def wrap_phase(phi: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = float(np.mod(phi + np.pi, TWO_PI) - np.pi)
    return np.pi if w == -np.pi else w


def amplifier_model(cavities, mechs, C11, C12, C21, C22, delta1, delta2, Phi=0.0,
                    g0_ratios=None) -> DeviceModel:
    """Four-tone directional amplifier: red pumps on cavity 1, blue on cavity 2.

    Cooperativities are indexed ``C[cavity][mech]``.  The loop phase is put
    on G11; every other drive has zero phase.
    """
    cavities = tuple(cavities)
    mechs = tuple(mechs)
    dets = (delta1, delta2)
    drives = []
    for (i, j, sb, C) in ((1, 1, "red", C11), (1, 2, "red", C12),
                          (2, 1, "blue", C21), (2, 2, "blue", C22)):
        g = coupling_from_cooperativity(C, mechs[j - 1].gamma, cavities[i - 1].kappa)
        phase = Phi if (i, j) == (1, 1) else 0.0
        drives.append(PumpDrive(i, j, sb, g, phase, dets[j - 1]))
    return DeviceModel(cavities, mechs, tuple(drives), g0_ratios)


@dataclass(frozen=True)
class SParamPoint:
    omega: float
    s11: complex
    s12: complex
    s21: complex
    s22: complex


@dataclass(frozen=True)
class SweepResult:
    """Scalar S-parameters sampled at probe detunings ``omega`` (rad/s)."""

    omega: np.ndarray
    s11: np.ndarray
    s12: np.ndarray
    s21: np.ndarray
    s22: np.ndarray

    @property
    def freq_hz(self) -> np.ndarray:
        return self.omega / TWO_PI

    def db(self, name: str) -> np.ndarray:
        return power_db(getattr(self, name))

    def point(self, k: int) -> SParamPoint:
        return SParamPoint(float(self.omega[k]), complex(self.s11[k]), complex(self.s12[k]),
                           complex(self.s21[k]), complex(self.s22[k]))

    def __len__(self):
        return len(self.omega)


def power_db(s) -> np.ndarray:
    """Power gain 20 log10|s|; exact zeros map to -inf."""
    with np.errstate(divide="ignore"):
        return 20.0 * np.log10(np.abs(s))


# ---------------------------------------------------------------------------
# lab-frame bookkeeping


def detuning_from_lab(f_lab_hz, cavity1_hz):
    """Probe detuning (rad/s) of an input tone at lab frequency ``f_lab_hz``."""
    return TWO_PI * (np.asarray(f_lab_hz, dtype=float) - cavity1_hz)


def lab_from_detuning(omega, cavity1_hz):
    """Lab frequency (Hz) of the input tone at probe detuning ``omega``."""
    return cavity1_hz + np.asarray(omega, dtype=float) / TWO_PI


def output_lab_frequency(omega, cavity2_hz):
    """Lab frequency (Hz) of the forward output, mirrored about cavity 2."""
    return cavity2_hz - np.asarray(omega, dtype=float) / TWO_PI


def detuning_from_output(f_out_hz, cavity2_hz):
    return TWO_PI * (cavity2_hz - np.asarray(f_out_hz, dtype=float))


# ---------------------------------------------------------------------------
# susceptibilities


def mech_susceptibility(mech: MechParams, delta: float, omega):
    """chi_m = (gamma/2 - i(omega + delta))^-1."""
    return 1.0 / (mech.gamma / 2.0 - 1j * (np.asarray(omega) + delta))


def cavity_susceptibility(cav: CavityParams, omega):
    """chi_c = (kappa/2 - i omega)^-1 with the total decay rate."""
    return 1.0 / (cav.kappa / 2.0 - 1j * np.asarray(omega))


def _mech_diag(model: DeviceModel, omega: np.ndarray) -> np.ndarray:
    """Diagonal of Xi_m for each omega, shape (N, 4).

    The creation-operator entries carry chi*[omega] = (chi[-omega])*, which
    is the same susceptibility with the detuning sign flipped.
    """
    out = np.empty(omega.shape + (4,), dtype=complex)
    for j, mech in enumerate(model.mechs):
        delta = model.detuning(j + 1)
        out[..., 2 * j] = mech_susceptibility(mech, delta, omega)
        out[..., 2 * j + 1] = mech_susceptibility(mech, -delta, omega)
    return out


def _cavity_diag(model: DeviceModel, omega: np.ndarray) -> np.ndarray:
    out = np.empty(omega.shape + (4,), dtype=complex)
    for i, cav in enumerate(model.cavities):
        chi = cavity_susceptibility(cav, omega)
        out[..., 2 * i] = chi
        out[..., 2 * i + 1] = chi
    return out


def mech_susceptibility_matrix(model: DeviceModel, omega: float) -> np.ndarray:
    return np.diag(_mech_diag(model, np.asarray(float(omega))))


def cavity_susceptibility_matrix(model: DeviceModel, omega: float) -> np.ndarray:
    return np.diag(_cavity_diag(model, np.asarray(float(omega))))


def sqrt_kappa_ext(model: DeviceModel) -> np.ndarray:
    """Diagonal of sqrt(K^e)."""
    k1, k2 = (c.kappa_ext for c in model.cavities)
    return np.sqrt(np.array([k1, k1, k2, k2], dtype=float))


def sqrt_gamma(model: DeviceModel) -> np.ndarray:
    g1, g2 = (m.gamma for m in model.mechs)
    return np.sqrt(np.array([g1, g1, g2, g2], dtype=float))


# ---------------------------------------------------------------------------
# coupling matrices


def build_coupling_mats(model: DeviceModel) -> tuple[np.ndarray, np.ndarray]:
    """Photon-from-phonon matrix G and phonon-from-photon matrix H.

    G = i [[ G11,   J11,   G12,   J12 ],      H = i [[ G11*,  J11,   G21*,  J21 ],
           [-J11*, -G11*, -J12*, -G12*],             [-J11*, -G11,  -J21*, -G21 ],
           [ G21,   J21,   G22,   J22 ],             [ G12*,  J12,   G22*,  J22 ],
           [-J21*, -G21*, -J22*, -G22*]]             [-J12*, -G12,  -J22*, -G22 ]]
    """
    G = np.zeros((4, 4), dtype=complex)
    H = np.zeros((4, 4), dtype=complex)
    for i in (1, 2):
        r = 2 * (i - 1)
        for j in (1, 2):
            c = 2 * (j - 1)
            g = model.coupling(i, j, "red")
            J = model.coupling(i, j, "blue")
            G[r, c] = g
            G[r, c + 1] = J
            G[r + 1, c] = -np.conj(J)
            G[r + 1, c + 1] = -np.conj(g)
            H[c, r] = np.conj(g)
            H[c, r + 1] = J
            H[c + 1, r] = -np.conj(J)
            H[c + 1, r + 1] = -g
    return 1j * G, 1j * H


def _coupling_T_batch(model: DeviceModel, omega: np.ndarray) -> np.ndarray:
    G, H = build_coupling_mats(model)
    xm = _mech_diag(model, omega)
    return -np.einsum("ik,nk,kj->nij", G, xm, H)


def coupling_matrix_T(model: DeviceModel, omega: float) -> np.ndarray:
    """Phonon-mediated photon coupling T[omega] = -G . Xi_m[omega] . H."""
    return _coupling_T_batch(model, np.atleast_1d(float(omega)))[0]


def noise_input_matrix(model: DeviceModel, omega: float) -> np.ndarray:
    """U[omega] = G . Xi_m[omega] . sqrt(Gamma), the mechanical-noise feed matrix."""
    G, _ = build_coupling_mats(model)
    xm = _mech_diag(model, np.asarray(float(omega)))
    return G * (xm * sqrt_gamma(model))[None, :]


# ---------------------------------------------------------------------------
# susceptibility and scattering


def _rcond(M: np.ndarray, Minv: Optional[np.ndarray] = None) -> np.ndarray:
    """Reciprocal 1-norm condition number 1/(|M|_1 |M^-1|_1), batched over leading axes."""
    if Minv is None:
        Minv = _safe_inv(M)
    n1 = np.abs(M).sum(axis=-2).max(axis=-1)
    n2 = np.abs(Minv).sum(axis=-2).max(axis=-1)
    with np.errstate(invalid="ignore", over="ignore"):
        rc = 1.0 / (n1 * n2)
    return np.where(np.isfinite(rc), rc, 0.0)


def _safe_inv(M: np.ndarray) -> np.ndarray:
    """Batched inverse; exactly singular members come back as NaN."""
    try:
        return np.linalg.inv(M)
    except np.linalg.LinAlgError:
        out = np.full(M.shape, np.nan, dtype=complex)
        for k in range(M.shape[0]):
            try:
                out[k] = np.linalg.inv(M[k])
            except np.linalg.LinAlgError:
                pass
        return out


def _inverse_susceptibility(model: DeviceModel, omega: np.ndarray, T: np.ndarray) -> np.ndarray:
    xc = _cavity_diag(model, omega)
    chi_inv = T.copy()
    idx = np.arange(4)
    chi_inv[:, idx, idx] += 1.0 / xc
    return chi_inv


def scattering_batch(model: DeviceModel, omega, T=None, check=True):
    """S_opt for an array of probe detunings.

    Returns ``(S, rcond)`` with ``S`` of shape (N, 4, 4).  With
    ``check=True`` the first singular point raises; otherwise singular
    points are filled with NaN.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if T is None:
        T = _coupling_T_batch(model, omega)
    chi_inv = _inverse_susceptibility(model, omega, T)
    # partial-pivot LU inverse; its 1-norm gives the condition estimate for free
    chi = _safe_inv(chi_inv)
    rc = _rcond(chi_inv, chi)
    bad = ~(rc >= RCOND_MIN)
    if check and bad.any():
        k = int(np.argmax(bad))
        raise SingularSystemError(float(omega[k]), float(rc[k]))
    sk = sqrt_kappa_ext(model)
    S = np.eye(4) - sk[None, :, None] * chi * sk[None, None, :]
    S[bad] = np.nan
    return S, rc


def system_susceptibility(model: DeviceModel, omega: float, with_rcond: bool = False):
    """chi[omega] = (Xi_c^-1 + T)^-1, optionally with its reciprocal condition number."""
    om = np.atleast_1d(float(omega))
    chi_inv = _inverse_susceptibility(model, om, _coupling_T_batch(model, om))
    chi = _safe_inv(chi_inv)
    rc = float(_rcond(chi_inv, chi)[0])
    if not rc >= RCOND_MIN:
        raise SingularSystemError(float(omega), rc)
    chi = chi[0]
    return (chi, rc) if with_rcond else chi


def scattering_matrix(model: DeviceModel, omega: float) -> np.ndarray:
    """S_opt = 1 - sqrt(K^e) chi sqrt(K^e) at one probe detuning."""
    S, _ = scattering_batch(model, float(omega))
    return S[0]


def scattering_from_T(model: DeviceModel, omega: float, T: np.ndarray) -> np.ndarray:
    """S_opt computed with a caller-supplied coupling matrix in place of T."""
    S, _ = scattering_batch(model, float(omega), T=np.asarray(T)[None])
    return S[0]


def extract_s_params(omega: float, S: np.ndarray) -> SParamPoint:
    """Scalar S-parameters from S_opt.

    S21 = S_opt[a2+, a1] maps an input on cavity 1 to the *conjugate* output
    of cavity 2: the device is a phase-conjugating frequency converter.
    """
    return SParamPoint(float(omega), *(complex(S[i, j]) for i, j in S_INDEX.values()))


def s_params(model: DeviceModel, omega: float) -> SParamPoint:
    return extract_s_params(omega, scattering_matrix(model, omega))


def sweep(model: DeviceModel, omega, T=None, check=True) -> SweepResult:
    """Evaluate the scalar S-parameters over an array of probe detunings."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    S, _ = scattering_batch(model, omega, T=T, check=check)
    return SweepResult(omega, *(S[:, i, j] for i, j in S_INDEX.values()))
