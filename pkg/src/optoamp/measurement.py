"""Raw-data pipeline: noise-floor subtraction and cross-gain calibration.

Measured transmissions are power ratios.  Each raw S_ij carries the product
of the input-line gain of its source cavity and the output-line gain of its
receiving cavity, ``S_ij^raw = eta_j^in eta_i^out S_ij``.  The reflection
gains are measured directly; the two cross gains are fixed by their sum
(which equals the sum of the reflection gains in dB) and their difference
(the imbalance seen on a reciprocal single-oscillator amplifier).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
from scipy.signal import savgol_coeffs, savgol_filter

from optoamp.errors import ConfigurationError, InsufficientSignalError, ShapeError

BANDS = ("cav1", "cav2")
SMOOTH_WINDOW = 51

# (source, receiver) band of each S-parameter
S_BANDS = {
    "s11": ("cav1", "cav1"),
    "s12": ("cav2", "cav1"),
    "s21": ("cav1", "cav2"),
    "s22": ("cav2", "cav2"),
}


@dataclass(frozen=True)
class RawSweep:
    """One measured trace.

    ``s_meas`` holds power ratios (real) or complex amplitudes.  ``p_noise``
    is the noise power per point recorded with resolution bandwidth ``rbw``
    while the analyzer integrated the signal over ``bw``; ``p_out`` is the
    excitation power.
    """

    freq_hz: np.ndarray
    s_meas: np.ndarray
    source: str = "cav1"
    receiver: str = "cav1"
    bw: float = 1.0
    rbw: float = 1.0
    p_noise: Optional[np.ndarray] = None
    p_out: float = 1.0

    def __post_init__(self):
        f = np.asarray(self.freq_hz, dtype=float)
        s = np.asarray(self.s_meas)
        object.__setattr__(self, "freq_hz", f)
        object.__setattr__(self, "s_meas", s)
        if f.shape != s.shape:
            raise ShapeError(f"frequency and data lengths differ ({f.size} vs {s.size})")
        if self.p_noise is not None:
            p = np.asarray(self.p_noise, dtype=float)
            if p.shape != f.shape:
                raise ShapeError(f"noise spectrum length {p.size} differs from sweep length {f.size}")
            if (p < 0).any():
                raise ValueError("noise power must be non-negative")
            object.__setattr__(self, "p_noise", p)
        if not (self.bw > 0 and self.rbw > 0):
            raise ValueError("bandwidths must be positive")
        if not self.p_out > 0:
            raise ValueError("excitation power must be positive")
        for b in (self.source, self.receiver):
            if b not in BANDS:
                raise ConfigurationError(f"unknown band label {b!r}", field="band")


@dataclass(frozen=True)
class CorrectedSweep:
    freq_hz: np.ndarray
    power: np.ndarray
    clamped: np.ndarray = field(repr=False)
    source: str = "cav1"
    receiver: str = "cav1"

    @property
    def db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(self.power)


@dataclass(frozen=True)
class GainSet:
    """Line-gain products in dB; ``g12`` is eta_2^in eta_1^out."""

    g11_db: float
    g22_db: float
    g12_db: float
    g21_db: float
    uncertainty_db: Mapping[str, float] = field(default_factory=dict)

    def gain_db(self, name: str) -> float:
        return getattr(self, "g" + name[1:] + "_db")

    def closure_db(self) -> float:
        """g12 + g21 - g11 - g22, zero for a consistent set."""
        return self.g12_db + self.g21_db - self.g11_db - self.g22_db


def subtract_noise(raw: RawSweep) -> CorrectedSweep:
    """Remove the noise power integrated in the analyzer bandwidth.

    S = S_meas - (BW/RBW) P_noise / P_out.  Points that turn negative are
    clamped to zero and flagged.
    """
    s = raw.s_meas
    if np.iscomplexobj(s):
        s = np.abs(s) ** 2
    s = np.asarray(s, dtype=float)
    if raw.p_noise is None:
        return CorrectedSweep(raw.freq_hz, s.copy(), np.zeros(s.shape, bool), raw.source, raw.receiver)
    out = s - (raw.bw / raw.rbw) * raw.p_noise / raw.p_out
    neg = out < 0
    out[neg] = 0.0
    return CorrectedSweep(raw.freq_hz, out, neg, raw.source, raw.receiver)


def solve_cross_gains(g11_db: float, g22_db: float, imbalance_db: float) -> tuple[float, float]:
    """Cross gains from g12 + g21 = g11 + g22 and g12 - g21 = imbalance."""
    total = g11_db + g22_db
    return (total + imbalance_db) / 2.0, (total - imbalance_db) / 2.0


@dataclass(frozen=True)
class Imbalance:
    value_db: float
    uncertainty_db: float
    n_points: int


def _floor_db(p_db: np.ndarray) -> float:
    finite = p_db[np.isfinite(p_db)]
    if finite.size == 0:
        return np.inf
    return float(np.percentile(finite, 10))


def _residual_std(p_db: np.ndarray, ref_db: Optional[np.ndarray]) -> float:
    if ref_db is not None:
        r = p_db - ref_db
        return float(np.std(r, ddof=1)) if r.size > 1 else 0.0
    n = p_db.size
    win = min(n if n % 2 else n - 1, SMOOTH_WINDOW)
    if win < 5:
        return float(np.std(p_db, ddof=1)) if n > 1 else 0.0
    r = p_db - savgol_filter(p_db, win, 3)
    # the smooth follows each point with weight h0; undo the shrinkage
    h0 = savgol_coeffs(win, 3)[win // 2]
    return float(np.std(r, ddof=1) / np.sqrt(1.0 - h0))


def estimate_imbalance(s12: np.ndarray, s21: np.ndarray, floor_db: Optional[float] = None,
                       threshold_db: float = 10.0, reference12: Optional[np.ndarray] = None,
                       reference21: Optional[np.ndarray] = None) -> Imbalance:
    """Mean dB ratio 10 log10(s12/s21) over points well above the noise floor.

    Inputs are corrected power ratios of a reciprocal single-oscillator
    amplifier.  Only points at least ``threshold_db`` above the floor in both
    sweeps are kept; the floor is the lowest decile of the sweeps unless
    given.  The uncertainty is the sum of the per-sweep standard deviations
    of residuals about a reference curve (a Savitzky-Golay smooth of each
    sweep when no reference is supplied).
    """
    s12 = np.asarray(s12, dtype=float)
    s21 = np.asarray(s21, dtype=float)
    if s12.shape != s21.shape:
        raise ShapeError("imbalance sweeps must have equal length")
    with np.errstate(divide="ignore"):
        d12 = 10.0 * np.log10(s12)
        d21 = 10.0 * np.log10(s21)
    f12 = _floor_db(d12) if floor_db is None else floor_db
    f21 = _floor_db(d21) if floor_db is None else floor_db
    keep = (d12 >= f12 + threshold_db) & (d21 >= f21 + threshold_db) \
        & np.isfinite(d12) & np.isfinite(d21)
    if not keep.any():
        raise InsufficientSignalError(f"no points lie {threshold_db} dB above the noise floor")
    r12 = None if reference12 is None else 10.0 * np.log10(np.asarray(reference12, float))[keep]
    r21 = None if reference21 is None else 10.0 * np.log10(np.asarray(reference21, float))[keep]
    value = float(np.mean(d12[keep] - d21[keep]))
    unc = _residual_std(d12[keep], r12) + _residual_std(d21[keep], r21)
    return Imbalance(value, unc, int(keep.sum()))


def calibrate_gains(g11_db: float, g22_db: float, imbalance: Imbalance,
                    reflection_unc_db: float = 0.0) -> GainSet:
    g12, g21 = solve_cross_gains(g11_db, g22_db, imbalance.value_db)
    unc = {"g11": reflection_unc_db, "g22": reflection_unc_db,
           "g12": reflection_unc_db + imbalance.uncertainty_db / 2,
           "g21": reflection_unc_db + imbalance.uncertainty_db / 2}
    return GainSet(g11_db, g22_db, g12, g21, unc)


def _check_bands(name: str, source: str, receiver: str):
    want = S_BANDS[name]
    if (source, receiver) != want:
        raise ConfigurationError(
            f"{name} trace recorded {source}->{receiver}, calibration expects {want[0]}->{want[1]}",
            field=name,
        )


def _scale(data, gain_db: float, power: bool, sign: int):
    if power:
        return np.asarray(data) * 10.0 ** (-sign * gain_db / 10.0)
    return np.asarray(data) * 10.0 ** (-sign * gain_db / 20.0)


def apply_calibration(sweeps: Mapping[str, object], gains: GainSet, power: Optional[bool] = None):
    """Divide each trace by its line-gain product.

    ``sweeps`` maps ``'s11'``..``'s22'`` to a :class:`RawSweep`,
    :class:`CorrectedSweep` or bare array.  Power-ratio traces are divided by
    10^(g/10), complex amplitudes by 10^(g/20) with their phase untouched.
    Returns a dict of the same keys.
    """
    return _transform(sweeps, gains, power, 1)


def invert_calibration(sweeps: Mapping[str, object], gains: GainSet, power: Optional[bool] = None):
    """Reapply the line gains, the inverse of :func:`apply_calibration`."""
    return _transform(sweeps, gains, power, -1)


def _transform(sweeps, gains, power, sign):
    out = {}
    for name, sw in sweeps.items():
        if name not in S_BANDS:
            raise ConfigurationError(f"unknown S-parameter {name!r}", field=name)
        g = gains.gain_db(name)
        if isinstance(sw, RawSweep):
            _check_bands(name, sw.source, sw.receiver)
            is_power = (not np.iscomplexobj(sw.s_meas)) if power is None else power
            out[name] = RawSweep(sw.freq_hz, _scale(sw.s_meas, g, is_power, sign), sw.source,
                                 sw.receiver, sw.bw, sw.rbw,
                                 None if sw.p_noise is None else _scale(sw.p_noise, g, True, sign),
                                 sw.p_out)
        elif isinstance(sw, CorrectedSweep):
            _check_bands(name, sw.source, sw.receiver)
            out[name] = CorrectedSweep(sw.freq_hz, _scale(sw.power, g, True, sign), sw.clamped,
                                       sw.source, sw.receiver)
        else:
            arr = np.asarray(sw)
            is_power = (not np.iscomplexobj(arr)) if power is None else power
            out[name] = _scale(arr, g, is_power, sign)
    return out


# ---------------------------------------------------------------------------
# CSV input


def read_trace_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read ``freq_hz,value_db`` (returned as power ratio) or ``freq_hz,re,im``.

    The header row is mandatory.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigurationError(f"{path}: empty file")
    header = [h.strip().lower() for h in rows[0]]
    body = [r for r in rows[1:] if r and any(c.strip() for c in r)]
    try:
        data = np.array([[float(c) for c in r] for r in body], dtype=float).reshape(len(body), -1)
    except ValueError as exc:
        raise ConfigurationError(f"{path}: non-numeric entry ({exc})") from None
    if header == ["freq_hz", "value_db"]:
        return data[:, 0], 10.0 ** (data[:, 1] / 10.0)
    if header == ["freq_hz", "re", "im"]:
        return data[:, 0], data[:, 1] + 1j * data[:, 2]
    raise ConfigurationError(f"{path}: header must be 'freq_hz,value_db' or 'freq_hz,re,im'", line=1)


def write_trace_csv(path, freq_hz, values):
    """Write a trace in the format :func:`read_trace_csv` accepts."""
    values = np.asarray(values)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if np.iscomplexobj(values):
            w.writerow(["freq_hz", "re", "im"])
            for f, v in zip(freq_hz, values):
                w.writerow([repr(float(f)), repr(float(v.real)), repr(float(v.imag))])
        else:
            w.writerow(["freq_hz", "value_db"])
            with np.errstate(divide="ignore"):
                db = 10.0 * np.log10(values)
            for f, v in zip(freq_hz, db):
                w.writerow([repr(float(f)), repr(float(v))])
