"""Grid-strength analysis and grid-forming (GFM) converter sizing.

The library quantifies the strength of a power network hosting
grid-following (GFL) wind farms through the generalized short-circuit
ratio (gSCR, the smallest eigenvalue of S_B^-1 B_r), sizes GFM converter
capacity to reach a target stability margin, and verifies the sizing law
with eigenvalue analysis and linear time-domain simulation.
"""

__version__ = "0.1.0"

from .network import (
    NetworkSpec,
    SusceptanceMatrices,
    KronReducedNetwork,
    GfmAttachment,
    NetworkError,
    parse_network,
    load_network,
    build_susceptance,
    kron_reduce,
    reduce_network,
    attach_gfm,
)
from .strength import (
    ModalDecomposition,
    SizingResult,
    UnitPlan,
    compute_modes,
    gscr,
    predict_gscr,
    size_gamma,
    terminal_scr_to_gscr,
    size_gfm,
    plan_gfm_units,
)
from .dynamics import (
    GflDeviceParams,
    StateSpaceModel,
    StabilityAssessment,
    OperatingPointError,
    BracketError,
    ConsistencyError,
    load_device,
    build_smib_model,
    compute_cgscr,
    modal_eigenvalues,
    direct_full_model,
    assess,
)
from .simulate import (
    Disturbance,
    SimulationResult,
    DampingEstimate,
    simulate,
    estimate_damping,
    traces_to_csv,
)

__all__ = [
    "__version__",
    "NetworkSpec", "SusceptanceMatrices", "KronReducedNetwork", "GfmAttachment",
    "NetworkError", "parse_network", "load_network", "build_susceptance",
    "kron_reduce", "reduce_network", "attach_gfm",
    "ModalDecomposition", "SizingResult", "UnitPlan", "compute_modes", "gscr",
    "predict_gscr", "size_gamma", "terminal_scr_to_gscr", "size_gfm",
    "plan_gfm_units",
    "GflDeviceParams", "StateSpaceModel", "StabilityAssessment",
    "OperatingPointError", "BracketError", "ConsistencyError", "load_device",
    "build_smib_model", "compute_cgscr", "modal_eigenvalues",
    "direct_full_model", "assess",
    "Disturbance", "SimulationResult", "DampingEstimate", "simulate",
    "estimate_damping", "traces_to_csv",
]
