"""Phase-space diagnostics for high-frequency time-harmonic Maxwell fields.

Modules: ``spectral`` (dispersion matrix and polarization modes),
``phase_space`` (discrete Wigner transform), ``quantization``
(pseudodifferential operators), ``transport`` (rays, reflection and
interfaces), ``synthesis`` (test fields) and ``cli`` (scenarios and
verification suites).
"""

from .config import ScenarioConfig, default_config, load_config, parse_config
from .errors import (
    ConfigError,
    DegenerateDirectionError,
    EmptyEnsembleError,
    EvanescentError,
    EventLocationError,
    GridError,
    MediumError,
    SemimaxError,
    SymbolError,
    WindowError,
)
from .grid import FieldSnapshot, Grid
from .phase_space import (
    ModeDensities,
    WignerGrid,
    WindowSpec,
    husimi_smooth,
    project_modes,
    shell_mass_fraction,
    wigner_transform,
)
from .quantization import (
    SymbolFunction,
    apply_pdo,
    apply_weyl,
    decompose_symbol,
    duality_pairing,
    product_remainder,
)
from .scenario import Check, RunReport, run_scenario
from .spectral import Medium, boundary_pairings, dispersion_matrix, eigensystem, normalization_report
from .suites import verify
from .synthesis import (
    MirrorFieldSpec,
    PlaneWaveSpec,
    conductor_mirror_field,
    eikonal_phase,
    maxwell_residual,
    plane_wave_field,
    wkb_field,
)
from .transport import (
    BoundaryMeasure,
    InterfaceChart,
    PhaseLattice,
    RayEnsemble,
    RayState,
    TransportScenario,
    bin_ensemble,
    calderon_split,
    reflect_flat,
    transport_ensemble,
)

__version__ = "0.1.0"

__all__ = [
    "BoundaryMeasure",
    "Check",
    "ConfigError",
    "DegenerateDirectionError",
    "EmptyEnsembleError",
    "EvanescentError",
    "EventLocationError",
    "FieldSnapshot",
    "Grid",
    "GridError",
    "InterfaceChart",
    "Medium",
    "MediumError",
    "MirrorFieldSpec",
    "ModeDensities",
    "PhaseLattice",
    "PlaneWaveSpec",
    "RayEnsemble",
    "RayState",
    "RunReport",
    "ScenarioConfig",
    "SemimaxError",
    "SymbolError",
    "SymbolFunction",
    "TransportScenario",
    "WignerGrid",
    "WindowError",
    "WindowSpec",
    "apply_pdo",
    "apply_weyl",
    "bin_ensemble",
    "boundary_pairings",
    "calderon_split",
    "conductor_mirror_field",
    "decompose_symbol",
    "default_config",
    "dispersion_matrix",
    "duality_pairing",
    "eigensystem",
    "eikonal_phase",
    "husimi_smooth",
    "load_config",
    "maxwell_residual",
    "normalization_report",
    "parse_config",
    "plane_wave_field",
    "product_remainder",
    "project_modes",
    "reflect_flat",
    "run_scenario",
    "shell_mass_fraction",
    "transport_ensemble",
    "verify",
    "wigner_transform",
    "wkb_field",
]
