"""Distributed hybrid observers for LTI plants over directed sensor networks.

Agents exchange estimates periodically; each one combines a continuous local
Luenberger correction with a multi-hop consensus jump so that the stacked
estimation error converges at a prescribed exponential rate.
"""

from .certification import (
    ErrorSystem,
    ISSCertificate,
    assemble_error_system,
    check_iss_bound,
    compute_certificate,
    monodromy,
)
from .decomposition import (
    MultiHopDecomposition,
    PlantModel,
    SensorGraph,
    build_decomposition,
    find_hop_depths,
)
from .errors import (
    ConsistencyError,
    DivergenceError,
    HybridObsError,
    InfeasibleError,
    InputError,
    PlacementError,
)
from .numerics import Tolerance
from .simulator import DisturbanceSpec, Scenario, simulate
from .synthesis import GainTargets, ObserverGains, synthesize

__version__ = "0.1.0"

__all__ = [
    "ConsistencyError", "DisturbanceSpec", "DivergenceError", "ErrorSystem",
    "GainTargets", "HybridObsError", "ISSCertificate", "InfeasibleError",
    "InputError", "MultiHopDecomposition", "ObserverGains", "PlacementError",
    "PlantModel", "Scenario", "SensorGraph", "Tolerance",
    "assemble_error_system", "build_decomposition", "check_iss_bound",
    "compute_certificate", "find_hop_depths", "monodromy", "simulate",
    "synthesize",
]
