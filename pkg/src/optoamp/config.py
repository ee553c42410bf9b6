"""Run configuration: JSON parsing, validation, serialization and fixtures.

Frequencies and rates are entered in Hz (``x / 2pi``) and converted to rad/s
when a :class:`~optoamp.model.DeviceModel` is built.  Unknown keys are
rejected with the dotted path of the offending field.
"""

from __future__ import annotations

import json
import logging
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from optoamp.errors import ConfigurationError
from optoamp.model import TWO_PI, CavityParams, DeviceModel, MechParams, PumpDrive, coupling_from_cooperativity

logger = logging.getLogger(__name__)

FIXTURES = {"amp": "fixture_amp.json", "iso": "fixture_iso.json"}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class CavitySpec(_Strict):
    f_hz: float = Field(ge=0)
    kappa_ext_hz: float = Field(gt=0)
    kappa_int_hz: float = Field(default=0.0, ge=0)


class MechSpec(_Strict):
    f_hz: float = Field(gt=0)
    gamma_hz: float = Field(gt=0)


class DeviceSpec(_Strict):
    cavities: tuple[CavitySpec, CavitySpec]
    mechs: tuple[MechSpec, MechSpec]
    g0_ratios: Optional[tuple[tuple[float, float], tuple[float, float]]] = None


class DriveSpec(_Strict):
    cavity: Literal[1, 2]
    mech: Literal[1, 2]
    sideband: Literal["red", "blue"]
    cooperativity: float = Field(ge=0)
    phase_rad: float = 0.0
    detuning_hz: float = 0.0


class SweepSpec(_Strict):
    start_hz: float
    stop_hz: float
    points: int = Field(ge=2)
    frame: Literal["rotating", "lab"] = "rotating"


class WorkpointSpec(_Strict):
    delta: Optional[float] = Field(default=None, ge=0)


class PhasesSpec(_Strict):
    start_rad: float = -3.141592653589793
    stop_rad: float = 3.141592653589793
    points: int = Field(default=181, ge=2)
    center_hz: Optional[float] = None


class FitSpec(_Strict):
    data: dict[Literal["s11", "s12", "s21", "s22"], str]
    fit_offsets: bool = False
    fit_background: bool = False
    restarts: int = Field(default=8, ge=0)
    seed: int = 0


class TraceSpec(_Strict):
    path: str
    noise_path: Optional[str] = None
    bw_hz: float = Field(default=1.0, gt=0)
    rbw_hz: float = Field(default=1.0, gt=0)
    p_out: float = Field(default=1.0, gt=0)


class CalibrateSpec(_Strict):
    g11_db: float
    g22_db: float
    imbalance_db: Optional[float] = None
    imbalance_s12: Optional[TraceSpec] = None
    imbalance_s21: Optional[TraceSpec] = None
    floor_db: Optional[float] = None
    traces: dict[Literal["s11", "s12", "s21", "s22"], TraceSpec] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _imbalance_source(self):
        traces = self.imbalance_s12 is not None and self.imbalance_s21 is not None
        if (self.imbalance_db is None) == (not traces):
            raise ValueError("give either imbalance_db or both imbalance_s12 and imbalance_s21")
        return self


class RunConfig(_Strict):
    device: DeviceSpec
    drives: tuple[DriveSpec, ...] = ()
    sweep: Optional[SweepSpec] = None
    workpoint: Optional[WorkpointSpec] = None
    phases: Optional[PhasesSpec] = None
    fit: Optional[FitSpec] = None
    calibrate: Optional[CalibrateSpec] = None

    def build_model(self, require_g0: bool = False) -> DeviceModel:
        return build_model(self, require_g0)


def _field_path(loc) -> str:
    out = ""
    for part in loc:
        if isinstance(part, int):
            out += f"[{part}]"
        else:
            out += ("." if out else "") + str(part)
    return out


def _line_of(text: str, loc) -> Optional[int]:
    """Best-effort line of the last named key in ``loc``."""
    keys = [p for p in loc if isinstance(p, str)]
    if not keys:
        return None
    needle = f'"{keys[-1]}"'
    for n, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return n
    return None


def parse_config(text: str) -> RunConfig:
    """Parse and validate JSON text; failures raise :class:`ConfigurationError`."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        err = exc.errors()[0]
        loc = err["loc"]
        msg = "unknown key" if err["type"] == "extra_forbidden" else err["msg"]
        raise ConfigurationError(msg, field=_field_path(loc) or None, line=_line_of(text, loc)) from None


def load_config(path) -> tuple[RunConfig, Path]:
    """Read a config file or a ``fixture:NAME`` reference; returns the config and its base directory."""
    spec = str(path)
    if spec.startswith("fixture:"):
        name = spec.split(":", 1)[1]
        if name not in FIXTURES:
            raise ConfigurationError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}")
        text = resources.files("optoamp.fixtures").joinpath(FIXTURES[name]).read_text(encoding="utf-8")
        return parse_config(text), Path.cwd()
    p = Path(spec)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config(text), p.resolve().parent


def serialize_config(cfg: RunConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json", exclude_none=True), indent=2) + "\n"


def build_model(cfg: RunConfig, require_g0: bool = False) -> DeviceModel:
    """DeviceModel in rad/s from a validated config.

    Without ``g0_ratios`` the beyond-RWA corrections fall back to unit ratios
    with a warning when ``require_g0`` is set.
    """
    dev = cfg.device
    cavities = tuple(CavityParams(TWO_PI * c.f_hz, TWO_PI * c.kappa_ext_hz, TWO_PI * c.kappa_int_hz)
                     for c in dev.cavities)
    mechs = tuple(MechParams(TWO_PI * m.f_hz, TWO_PI * m.gamma_hz) for m in dev.mechs)
    g0 = dev.g0_ratios
    if g0 is None and require_g0:
        logger.warning("g0_ratios not given; using unit single-photon coupling ratios")
        g0 = ((1.0, 1.0), (1.0, 1.0))
    drives = []
    for d in cfg.drives:
        g = coupling_from_cooperativity(d.cooperativity, mechs[d.mech - 1].gamma, cavities[d.cavity - 1].kappa)
        drives.append(PumpDrive(d.cavity, d.mech, d.sideband, g, d.phase_rad, TWO_PI * d.detuning_hz))
    try:
        return DeviceModel(cavities, mechs, tuple(drives), g0)
    except ConfigurationError as exc:
        raise ConfigurationError(str(exc), field="drives") from None
