"""Frequency-domain model of a two-cavity, two-oscillator optomechanical directional amplifier."""

from optoamp.errors import (
    BoundsError,
    ConfigurationError,
    DegenerateManifoldError,
    InstabilityError,
    InsufficientSignalError,
    OptoampError,
    RangeError,
    ShapeError,
    SingularSystemError,
    UnboundedGainError,
)
from optoamp.model import (
    CavityParams,
    DeviceModel,
    MechParams,
    PumpDrive,
    SParamPoint,
    SweepResult,
    amplifier_model,
    build_coupling_mats,
    cavity_susceptibility,
    coupling_matrix_T,
    mech_susceptibility,
    noise_input_matrix,
    s_params,
    scattering_matrix,
    sweep,
    system_susceptibility,
)
from optoamp.oracle import direct_solve_oracle
from optoamp.workpoint import (
    Metrics,
    StabilityReport,
    WorkingPoint,
    compute_metrics,
    gain_at_instability_db,
    impedance_matching_delta,
    isolation_point,
    matched_gain_db,
    phase_sweep,
    stability_check,
)

__version__ = "0.1.0"
