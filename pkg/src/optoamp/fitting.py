"""Simultaneous least-squares fit of the amplifier model to four S-parameter traces.

The free parameters are the four per-sideband cooperativities, the two
mechanical detunings and the loop phase, optionally with a frequency offset
and a constant noise background per trace.  Cavity and mechanical rates are
held fixed.  Residuals are power-dB differences.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
from scipy.optimize import least_squares

from optoamp.errors import BoundsError, ConfigurationError, OptoampError, ShapeError
from optoamp.model import (
    amplifier_model,
    power_db,
    sweep,
    wrap_phase,
)
from optoamp.workpoint import stability_check

S_NAMES = ("s11", "s12", "s21", "s22")
C_MAX = 10.0
DELTA_MAX = 5.0  # in units of the mode's linewidth
SENTINEL_DB = 300.0


@dataclass(frozen=True)
class FitParams:
    """Model parameters; detunings in rad/s, offsets in rad/s, backgrounds in dB."""

    C11: float
    C12: float
    C21: float
    C22: float
    delta1: float
    delta2: float
    Phi: float
    offsets: tuple = (0.0, 0.0, 0.0, 0.0)
    backgrounds: tuple = (-np.inf, -np.inf, -np.inf, -np.inf)

    @property
    def cooperativities(self) -> np.ndarray:
        return np.array([self.C11, self.C12, self.C21, self.C22])

    def model(self, cavities, mechs):
        return amplifier_model(cavities, mechs, self.C11, self.C12, self.C21, self.C22,
                               self.delta1, self.delta2, self.Phi)


@dataclass(frozen=True)
class FitProblem:
    """Four traces sharing one parameter vector.

    ``datasets`` maps each S-parameter name to ``(omega, data_db)`` with
    ``omega`` the probe detuning in rad/s and ``data_db`` power dB.
    """

    cavities: tuple
    mechs: tuple
    datasets: Mapping[str, tuple]
    fit_offsets: bool = False
    fit_background: bool = False

    def __post_init__(self):
        if set(self.datasets) != set(S_NAMES):
            raise ConfigurationError("fit needs exactly the traces s11, s12, s21, s22", field="datasets")
        clean = {}
        for name in S_NAMES:
            w, d = self.datasets[name]
            w = np.asarray(w, dtype=float)
            d = np.asarray(d, dtype=float)
            if w.shape != d.shape or w.ndim != 1:
                raise ShapeError(f"{name}: frequency and data arrays differ in shape")
            clean[name] = (w, d)
        object.__setattr__(self, "datasets", clean)
        object.__setattr__(self, "cavities", tuple(self.cavities))
        object.__setattr__(self, "mechs", tuple(self.mechs))

    @property
    def gammas(self) -> tuple[float, float]:
        return self.mechs[0].gamma, self.mechs[1].gamma

    @property
    def n_residuals(self) -> int:
        return sum(len(self.datasets[n][0]) for n in S_NAMES)


@dataclass(frozen=True)
class FitResult:
    params: FitParams
    objective: float
    rms_db: Mapping[str, float]
    converged: bool
    status: int
    message: str
    nfev: int
    singular_points: int = 0
    x: np.ndarray = field(default=None, repr=False)


# ---------------------------------------------------------------------------
# parameter vector


def pack(params: FitParams, problem: FitProblem) -> np.ndarray:
    g1, g2 = problem.gammas
    x = [params.C11, params.C12, params.C21, params.C22,
         params.delta1 / g1, params.delta2 / g2, params.Phi]
    if problem.fit_offsets:
        x += [o / g1 for o in params.offsets]
    if problem.fit_background:
        x += list(params.backgrounds)
    return np.asarray(x, dtype=float)


def unpack(x: np.ndarray, problem: FitProblem) -> FitParams:
    g1, g2 = problem.gammas
    k = 7
    offsets = (0.0,) * 4
    backgrounds = (-np.inf,) * 4
    if problem.fit_offsets:
        offsets = tuple(float(v * g1) for v in x[k:k + 4])
        k += 4
    if problem.fit_background:
        backgrounds = tuple(float(v) for v in x[k:k + 4])
    return FitParams(*(float(v) for v in x[:4]), float(x[4] * g1), float(x[5] * g2),
                     float(x[6]), offsets, backgrounds)


def bounds(problem: FitProblem):
    lo = [0.0] * 4 + [-DELTA_MAX] * 2 + [-np.inf]
    hi = [C_MAX] * 4 + [DELTA_MAX] * 2 + [np.inf]
    if problem.fit_offsets:
        lo += [-DELTA_MAX] * 4
        hi += [DELTA_MAX] * 4
    if problem.fit_background:
        lo += [-200.0] * 4
        hi += [50.0] * 4
    return np.array(lo), np.array(hi)


def check_bounds(params: FitParams, problem: FitProblem):
    x = pack(params, problem)
    lo, hi = bounds(problem)
    bad = np.flatnonzero((x < lo) | (x > hi) | np.isnan(x))
    if bad.size:
        raise BoundsError(f"initial guess outside bounds at parameter indices {bad.tolist()}")


# ---------------------------------------------------------------------------
# residuals


def model_db(params: FitParams, problem: FitProblem) -> dict:
    """Model power dB on each trace's grid; singular points come back NaN."""
    m = params.model(problem.cavities, problem.mechs)
    cache = []
    out = {}
    for k, name in enumerate(S_NAMES):
        w = problem.datasets[name][0] + params.offsets[k]
        sw = next((c for g, c in cache if g.shape == w.shape and np.array_equal(g, w)), None)
        if sw is None:
            sw = sweep(m, w, check=False)
            cache.append((w, sw))
        p = np.abs(getattr(sw, name)) ** 2
        if np.isfinite(params.backgrounds[k]):
            p = p + 10.0 ** (params.backgrounds[k] / 10.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            out[name] = 10.0 * np.log10(p)
    return out


def residuals(params: FitParams, problem: FitProblem, return_flags: bool = False):
    """Concatenated model - data dB residuals in s11, s12, s21, s22 order.

    A probe point where the response is singular gets a fixed large residual
    and is flagged.
    """
    mdb = model_db(params, problem)
    res, flags = [], []
    for name in S_NAMES:
        r = mdb[name] - problem.datasets[name][1]
        bad = ~np.isfinite(r)
        r = np.where(bad, SENTINEL_DB, r)
        res.append(r)
        flags.append(bad)
    r = np.concatenate(res)
    return (r, np.concatenate(flags)) if return_flags else r


def generate(params: FitParams, cavities, mechs, omega, noise_db: float = 0.0,
             seed: Optional[int] = None) -> dict:
    """Synthetic four-trace data set in power dB on a shared grid."""
    omega = np.asarray(omega, dtype=float)
    sw = sweep(params.model(cavities, mechs), omega)
    rng = np.random.default_rng(seed)
    data = {}
    for name in S_NAMES:
        d = power_db(getattr(sw, name))
        if noise_db:
            d = d + rng.normal(0.0, noise_db, d.shape)
        data[name] = (omega, d)
    return data


# ---------------------------------------------------------------------------
# optimizer


def _amplitude_residuals(x: np.ndarray, problem: FitProblem) -> np.ndarray:
    mdb = model_db(unpack(x, problem), problem)
    r = np.concatenate([10.0 ** (mdb[n] / 20.0) - 10.0 ** (problem.datasets[n][1] / 20.0)
                        for n in S_NAMES])
    return np.where(np.isfinite(r), r, SENTINEL_DB)


def _restart_points(x0: np.ndarray, lo: np.ndarray, hi: np.ndarray, n: int, seed: int):
    """Extra starting vectors: the mode-swapped mirror of x0, then seeded scatter."""
    pts = []
    if n <= 0:
        return pts
    m = x0.copy()
    m[[0, 1, 2, 3]] = x0[[1, 0, 3, 2]]
    m[[4, 5]] = x0[[5, 4]]
    m[6] = -x0[6]
    pts.append(m)
    rng = np.random.default_rng(seed)
    for _ in range(n - 1):
        x = x0.copy()
        x[:4] = x0[:4] * rng.uniform(0.5, 1.5, 4) + rng.uniform(0.0, 0.2, 4)
        x[4:6] = x0[4:6] + rng.uniform(-1.0, 1.0, 2)
        x[6] = rng.uniform(-np.pi, np.pi)
        pts.append(x)
    return [np.clip(x, lo, hi) for x in pts]


def fit(problem: FitProblem, initial: FitParams, restarts: int = 8, seed: int = 0,
        max_nfev: int = 2000, ftol: float = 1e-10, xtol: float = 1e-12,
        gtol: float = 1e-12) -> FitResult:
    """Bounded trust-region least squares from ``initial``.

    Each run first fits linear amplitudes, then refines the dB residuals.
    It stops when the relative objective change drops below ``ftol``
    or the relative step below ``xtol``.  ``restarts`` further runs start
    from the mode-swapped mirror of the guess and from seeded perturbations
    of it; the lowest objective wins, earlier runs winning ties.  Restarts
    are skipped once a run reproduces the data to round-off.  Deterministic
    for identical inputs and seed.
    """
    check_bounds(initial, problem)
    x0 = pack(initial, problem)
    lo, hi = bounds(problem)

    def fun(x):
        return residuals(unpack(x, problem), problem)

    exact = 1e-20 * problem.n_residuals
    best, nfev = None, 0
    for start in [x0] + _restart_points(x0, lo, hi, restarts, seed):
        # amplitude-domain pre-fit: smoother landscape than dB near deep dips
        pre = least_squares(_amplitude_residuals, start, args=(problem,), bounds=(lo, hi),
                            method="trf", ftol=1e-8, xtol=1e-10, max_nfev=max_nfev)
        sol = least_squares(fun, pre.x, bounds=(lo, hi), method="trf", ftol=ftol, xtol=xtol,
                            gtol=gtol, max_nfev=max_nfev, x_scale=1.0)
        nfev += pre.nfev + sol.nfev
        if best is None or 2 * sol.cost < 2 * best.cost:
            best = sol
        if 2 * best.cost <= exact:
            break
    x = best.x.copy()
    x[6] = wrap_phase(x[6])
    params = unpack(x, problem)
    r, flags = residuals(params, problem, return_flags=True)
    rms, k = {}, 0
    for name in S_NAMES:
        n = len(problem.datasets[name][0])
        rms[name] = float(np.sqrt(np.mean(r[k:k + n] ** 2)))
        k += n
    return FitResult(params, float(np.sum(r ** 2)), rms, best.status > 0, best.status,
                     best.message, nfev, int(flags.sum()), x)


def random_params(rng: np.random.Generator, mechs, cavities, c_max: float = 3.0,
                  delta_max: float = 3.0, max_tries: int = 1000) -> FitParams:
    """Random stable parameter set for self-consistency checks."""
    for _ in range(max_tries):
        C = rng.uniform(0.0, c_max, 4)
        d = rng.uniform(-delta_max, delta_max, 2)
        p = FitParams(*C, d[0] * mechs[0].gamma, d[1] * mechs[1].gamma, rng.uniform(-np.pi, np.pi))
        try:
            if stability_check(p.model(cavities, mechs)).stable:
                return p
        except OptoampError:
            continue
    raise RuntimeError("no stable parameter set found")


def perturbed(params: FitParams, rng: np.random.Generator, rel: float = 0.2) -> FitParams:
    """Copy with cooperativities and detunings scaled by factors in [1-rel, 1+rel]."""
    f = rng.uniform(1 - rel, 1 + rel, 6)
    return dataclasses.replace(
        params, C11=min(params.C11 * f[0], C_MAX), C12=min(params.C12 * f[1], C_MAX),
        C21=min(params.C21 * f[2], C_MAX), C22=min(params.C22 * f[3], C_MAX),
        delta1=params.delta1 * f[4], delta2=params.delta2 * f[5])
