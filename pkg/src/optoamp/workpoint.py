"""Working points, closed-form gains, stability and amplifier figures of merit."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq, minimize, minimize_scalar

from optoamp.errors import InstabilityError, RangeError, UnboundedGainError
from optoamp.model import (
    TWO_PI,
    DeviceModel,
    SweepResult,
    amplifier_model,
    power_db,
    s_params,
    sweep,
    wrap_phase,
)
from optoamp.oracle import dynamics_matrix

logger = logging.getLogger(__name__)

HALF_POWER_DB = 10.0 * np.log10(2.0)


@dataclass(frozen=True)
class WorkingPoint:
    delta: float
    delta1: float
    delta2: float
    Phi: float
    matched: bool = False
    match_residual: float = float("nan")


@dataclass(frozen=True)
class MatchingResult:
    """Outcome of the impedance-matching search.

    ``delta`` is None when no real root exists.  ``closed_form_a`` is
    1/2 sqrt(C1/(2 r1 - 1) - 1) and ``closed_form_b`` is
    1/2 sqrt(2 C1/(1 - 2 r1) - 1); neither solves the reflection condition
    in general, they are kept as diagnostics only.
    """

    feasible: bool
    delta: Optional[float]
    residual: float
    closed_form_a: float
    closed_form_b: float


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    poles: tuple
    margin: float


@dataclass(frozen=True)
class Metrics:
    peak_forward_gain_db: float
    min_backward_gain_db: float
    nonreciprocity_db: float
    reflection_min_db: float
    isolation_bandwidth_hz: float
    amplification_bandwidth_hz: float
    peak_forward_freq_hz: float = float("nan")
    dip_freq_hz: float = float("nan")
    forward_gain_at_dip_db: float = float("nan")
    nonreciprocity_freq_hz: float = float("nan")


@dataclass(frozen=True)
class PhaseSweep:
    phis: np.ndarray
    center: float
    s12: np.ndarray = field(repr=False)
    s21: np.ndarray = field(repr=False)

    @property
    def s12_db(self):
        return power_db(self.s12)

    @property
    def s21_db(self):
        return power_db(self.s21)


# ---------------------------------------------------------------------------
# isolation and matching


def isolation_phase(delta: float) -> float:
    return float(np.angle((-1 + 2j * delta) / (1 + 2j * delta)))


def isolation_point(gamma1: float, gamma2: float, delta: float) -> WorkingPoint:
    """Detunings and loop phase that cancel T12[0] for equal cooperativities.

    The detunings ``delta1 = gamma1*delta`` and ``delta2 = -gamma2*delta``
    compensate the linewidth imbalance; the phase is
    ``Arg((-1 + 2i delta) / (1 + 2i delta))``.
    """
    if not (gamma1 > 0 and gamma2 > 0):
        raise ValueError("mechanical linewidths must be positive")
    return WorkingPoint(float(delta), gamma1 * delta, -gamma2 * delta, isolation_phase(delta))


def reflection_at_center(C1: float, r1: float, delta: float) -> float:
    """Signed on-resonance reflection 1 - 2 r1 / (2 C1/(1+4 delta^2) + 1) at the isolation point."""
    return 1.0 - 2.0 * r1 / (2.0 * C1 / (1.0 + 4.0 * delta * delta) + 1.0)


def impedance_matching_delta(C1: float, r1: float) -> MatchingResult:
    """Dimensionless detuning delta >= 0 that zeroes |S11[0]|.

    The reflection expression is root-found in delta^2.  A root exists only
    for an overcoupled input cavity (r1 > 1/2) with 2 C1 / (2 r1 - 1) >= 1.
    """
    if not 0 < r1 <= 1:
        raise ValueError("r1 must lie in (0, 1]")
    with np.errstate(invalid="ignore", divide="ignore"):
        form_a = 0.5 * np.sqrt(C1 / (2 * r1 - 1) - 1) if r1 != 0.5 else np.nan
        form_b = 0.5 * np.sqrt(2 * C1 / (1 - 2 * r1) - 1) if r1 != 0.5 else np.nan

    def f(x):
        return reflection_at_center(C1, r1, np.sqrt(x))

    if r1 <= 0.5 or f(0.0) < 0:
        logger.info("impedance matching infeasible for C1=%g r1=%g", C1, r1)
        return MatchingResult(False, None, float("nan"), float(form_a), float(form_b))
    if f(0.0) == 0.0:
        x = 0.0
    else:
        hi = 1.0
        while f(hi) > 0:
            hi *= 2.0
        x = brentq(f, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    delta = float(np.sqrt(x))
    res = abs(reflection_at_center(C1, r1, delta))
    logger.info(
        "matching delta=%.12g (alternative closed forms: %.6g, %.6g)", delta, form_a, form_b
    )
    return MatchingResult(True, delta, res, float(form_a), float(form_b))


def matched_working_point(cavities, mechs, C1: float, C2: float) -> tuple[WorkingPoint, DeviceModel]:
    """Isolated and impedance-matched amplifier with equal per-mode cooperativities.

    Returns the working point, with its residual |S11[0]| evaluated on the
    full model, and that model.
    """
    m = impedance_matching_delta(C1, cavities[0].kappa_ext / (cavities[0].kappa_ext + cavities[0].kappa_int))
    if not m.feasible:
        raise ValueError("impedance matching is infeasible for these parameters")
    wp = isolation_point(mechs[0].gamma, mechs[1].gamma, m.delta)
    model = amplifier_model(cavities, mechs, C1, C1, C2, C2, wp.delta1, wp.delta2, wp.Phi)
    res = abs(s_params(model, 0.0).s11)
    return WorkingPoint(wp.delta, wp.delta1, wp.delta2, wp.Phi, True, res), model


# ---------------------------------------------------------------------------
# closed-form gains


def matched_power_gain(C1: float, C2: float, r1: float, r2: float) -> float:
    """|S21[0]|^2 = (r2/r1) 2 C2 (2 C1 + 1 - 2 r1) / (C1/(2 r1 - 1) - C2)^2."""
    if not r1 > 0.5:
        raise ValueError("matched gain needs an overcoupled input cavity (r1 > 1/2)")
    den = C1 / (2 * r1 - 1) - C2
    if den == 0:
        raise InstabilityError(f"gain pole at C2 = C1/(2 r1 - 1) = {C2}")
    return (r2 / r1) * 2 * C2 * (2 * C1 + 1 - 2 * r1) / den**2


def matched_gain_db(C1: float, C2: float, r1: float, r2: float) -> float:
    g = matched_power_gain(C1, C2, r1, r2)
    if g == 0:
        return -np.inf
    return float(10.0 * np.log10(g))


def gain_at_instability(r1: float, r2: float) -> float:
    """Amplitude gain ceiling sqrt(r2/r1) (2 r1 - 1)/(1 - r1) of the matched amplifier."""
    if r1 >= 1:
        raise UnboundedGainError("gain at instability diverges for a lossless input cavity")
    if not r1 > 0.5:
        raise ValueError("gain ceiling defined for 1/2 < r1 < 1")
    if not 0 < r2 <= 1:
        raise ValueError("r2 must lie in (0, 1]")
    return float(np.sqrt(r2 / r1) * (2 * r1 - 1) / (1 - r1))


def gain_at_instability_db(r1: float, r2: float) -> float:
    return float(20.0 * np.log10(gain_at_instability(r1, r2)))


def center_power_gain(C1: float, C2: float, r1: float, r2: float, delta: float) -> float:
    """|S21[0]|^2 at the isolation point for any delta (matched or not)."""
    q = 1 + 4 * delta * delta
    amp = np.sqrt(r1 * r2) * 16 * abs(delta) * np.sqrt(C1 * C2 * q) / ((2 * C1 + q) * abs(q - 2 * C2))
    return float(amp**2)


# ---------------------------------------------------------------------------
# stability


def stability_check(model: DeviceModel) -> StabilityReport:
    """Poles of the un-eliminated photon + phonon response.

    det(M0 - i omega) = 0 gives omega = -i lambda for every eigenvalue lambda
    of M0.  Under the exp(-i omega t) convention a pole decays when
    Im(omega) < 0; ``margin`` is the smallest decay rate -Im(omega).
    """
    lam = np.linalg.eigvals(dynamics_matrix(model))
    poles = -1j * lam
    order = np.lexsort((poles.real, -poles.imag))
    poles = tuple(complex(p) for p in poles[order])
    margin = float(min(-p.imag for p in poles))
    return StabilityReport(margin > 0, poles, margin)


def critical_parameter(make_model: Callable[[float], DeviceModel], lo: float, hi: float,
                       rtol: float = 1e-6) -> float:
    """Bisect for the parameter value at which the leading pole crosses into growth.

    ``make_model(lo)`` must be stable and ``make_model(hi)`` unstable.
    """
    if not stability_check(make_model(lo)).stable:
        raise ValueError("lower bracket is already unstable")
    if stability_check(make_model(hi)).stable:
        raise ValueError("upper bracket is still stable")
    while hi - lo > rtol * max(abs(hi), 1.0):
        mid = 0.5 * (lo + hi)
        if stability_check(make_model(mid)).stable:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# figures of merit


def _crossing(f: np.ndarray, y: np.ndarray, k: int, level: float, step: int) -> float:
    """Walk from index k in direction ``step`` until y crosses ``level``; interpolate."""
    n = len(y)
    i = k
    while 0 <= i + step < n:
        j = i + step
        if (y[j] - level) * (y[k] - level) <= 0 and y[j] != y[i]:
            t = (level - y[i]) / (y[j] - y[i])
            return float(f[i] + t * (f[j] - f[i]))
        i = j
    raise RangeError("bandwidth edge not bracketed by the sweep")


def compute_metrics(sw: SweepResult, gamma: Optional[float] = None) -> Metrics:
    """Extrema and bandwidths of a forward/backward transmission sweep.

    The isolation bandwidth is the contiguous range around the deepest
    backward dip where |S12|^2 lies at least 3 dB below the backward level
    flanking the dip (the lower of the maxima on either side).  The
    amplification bandwidth is the contiguous range around the forward peak
    where |S21|^2 exceeds half its maximum.  With ``gamma`` given, the sweep
    must sample at least 10 points per gamma/2pi.
    """
    f = sw.freq_hz
    if len(f) < 3:
        raise RangeError("sweep too short")
    if gamma is not None:
        step = np.abs(np.diff(f)).max()
        if step > gamma / TWO_PI / 10:
            raise RangeError("sweep resolution coarser than gamma/10")
    d11, d12, d21 = sw.db("s11"), sw.db("s12"), sw.db("s21")
    nr = d21 - d12
    p = int(np.nanargmax(d21))
    if p in (0, len(f) - 1):
        raise RangeError("forward gain peak lies at the sweep edge")
    amp_bw = _crossing(f, d21, p, d21[p] - HALF_POWER_DB, 1) - _crossing(
        f, d21, p, d21[p] - HALF_POWER_DB, -1)

    k = int(np.nanargmin(d12))
    if k in (0, len(f) - 1):
        iso_bw = 0.0
    else:
        base = min(np.nanmax(d12[:k]), np.nanmax(d12[k + 1:]))
        level = base - 3.0
        if d12[k] > level:
            iso_bw = 0.0
        else:
            iso_bw = _crossing(f, d12, k, level, 1) - _crossing(f, d12, k, level, -1)
    q = int(np.nanargmax(nr))
    return Metrics(
        peak_forward_gain_db=float(d21[p]),
        min_backward_gain_db=float(d12[k]),
        nonreciprocity_db=float(nr[q]),
        reflection_min_db=float(np.nanmin(d11)),
        isolation_bandwidth_hz=float(abs(iso_bw)),
        amplification_bandwidth_hz=float(abs(amp_bw)),
        peak_forward_freq_hz=float(f[p]),
        dip_freq_hz=float(f[k]),
        forward_gain_at_dip_db=float(d21[k]),
        nonreciprocity_freq_hz=float(f[q]),
    )


# ---------------------------------------------------------------------------
# phase dependence


def nominal_delta(model: DeviceModel) -> float:
    """Dimensionless detuning implied by the model, averaged over both modes."""
    (d1, d2), (m1, m2) = model.detunings, model.mechs
    return 0.5 * (d1 / m1.gamma - d2 / m2.gamma)


def band_center(model: DeviceModel, span: Optional[float] = None, points: int = 401) -> float:
    """Probe detuning of the deepest |S12| at the analytic isolation phase."""
    gamma = max(m.gamma for m in model.mechs)
    span = 5 * gamma if span is None else span
    ref = model.with_phase(isolation_phase(nominal_delta(model)))
    w = np.linspace(-span, span, points)
    d12 = sweep(ref, w).db("s12")
    k = int(np.nanargmin(d12))
    lo, hi = w[max(k - 1, 0)], w[min(k + 1, points - 1)]
    res = minimize_scalar(lambda x: power_db(s_params(ref, x).s12), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-9 * gamma})
    return float(res.x) if res.fun <= d12[k] else float(w[k])


def phase_sweep(model: DeviceModel, phis: Sequence[float], center: Optional[float] = None,
                rotate=(1, 1, "red")) -> PhaseSweep:
    """Backward and forward transmission at the band center versus loop phase.

    The phase is changed on a single drive (``rotate``), the others stay put.
    """
    phis = np.asarray(phis, dtype=float)
    if center is None:
        center = band_center(model)
    s12 = np.empty(len(phis), dtype=complex)
    s21 = np.empty(len(phis), dtype=complex)
    for n, phi in enumerate(phis):
        sp = s_params(model.with_phase(phi, rotate), center)
        s12[n], s21[n] = sp.s12, sp.s21
    return PhaseSweep(phis, float(center), s12, s21)


def optimize_phase(model: DeviceModel, span: Optional[float] = None,
                   n_phi: int = 73, n_omega: int = 201) -> tuple[float, float]:
    """Loop phase and probe detuning that maximize |S21/S12|.

    A coarse (phi, omega) grid seeds a Nelder-Mead refinement.  The search is
    deterministic.  Returns ``(Phi, omega)``.
    """
    gamma = max(m.gamma for m in model.mechs)
    span = 5 * gamma if span is None else span
    w = np.linspace(-span, span, n_omega)
    best = (np.inf, 0.0, 0.0)
    for phi in np.linspace(-np.pi, np.pi, n_phi, endpoint=False):
        sw = sweep(model.with_phase(phi), w, check=False)
        obj = sw.db("s12") - sw.db("s21")
        k = int(np.nanargmin(obj))
        if obj[k] < best[0]:
            best = (obj[k], phi, w[k])

    def objective(x):
        sp = s_params(model.with_phase(x[0]), x[1] * gamma)
        return power_db(sp.s12) - power_db(sp.s21)

    res = minimize(objective, [best[1], best[2] / gamma], method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-10, "maxiter": 4000})
    if res.fun < best[0]:
        return wrap_phase(res.x[0]), float(res.x[1] * gamma)
    return wrap_phase(best[1]), float(best[2])
