"""Desk-scale numerical laboratory for the composable security of
prepare-and-measure key distribution.

The package simulates the four-state two-basis protocol under explicit
eavesdropping strategies, carries the adversary's exact conditional states
through sifting, testing, and hashing, assembles the real/ideal/hybrid
states of the distinguishability game, and certifies every security bound
numerically.
"""

__version__ = "0.1.0"

from .bounds import (
    BoundRow,
    SecurityReport,
    certify,
    eps_composable,
    eps_privacy,
    keywise_privacy,
    mu1_uniformity,
    mu2_fidelity,
    mu2_privacy,
    triangle_decomposition,
)
from .compose import CompositionNode, CompositionTree, compose_pair, repeated_chain, repeated_qkd, tree_total
from .cqstate import BlockDiagState, KeyedState
from .qinfo import (
    AccessibleInfoEstimate,
    ClassicalJointTable,
    ConsistencyError,
    CqEnsemble,
    MeasurementFamilyConfig,
    accessible_info_estimate,
    binary_entropy,
    conditional_mutual_info,
    fidelity,
    holevo_chi,
    measurement_mutual_info,
    relative_entropy,
    shannon_distinguishability,
    trace_distance,
    von_neumann_entropy,
)
from .qkdsim import (
    EveStrategy,
    GameStates,
    ProtocolConfig,
    QkdRunRecord,
    build_game_states,
    channel_to_ent_pair,
    phi_pair,
    run_protocol,
    singlet_fidelity,
)
from .qmatrix import (
    CapacityError,
    DensityMatrix,
    KrausChannel,
    MeasurementOutcome,
    Povm,
    PureState,
    apply_channel,
    measure,
    partial_trace,
    purify,
    tensor,
)
from .scenario import Scenario, ScenarioError, load_scenario

__all__ = [
    "__version__",
    "AccessibleInfoEstimate",
    "BlockDiagState",
    "BoundRow",
    "CapacityError",
    "ClassicalJointTable",
    "CompositionNode",
    "CompositionTree",
    "ConsistencyError",
    "CqEnsemble",
    "DensityMatrix",
    "EveStrategy",
    "GameStates",
    "KeyedState",
    "KrausChannel",
    "MeasurementFamilyConfig",
    "MeasurementOutcome",
    "Povm",
    "ProtocolConfig",
    "PureState",
    "QkdRunRecord",
    "Scenario",
    "ScenarioError",
    "SecurityReport",
    "accessible_info_estimate",
    "apply_channel",
    "binary_entropy",
    "build_game_states",
    "certify",
    "channel_to_ent_pair",
    "compose_pair",
    "conditional_mutual_info",
    "eps_composable",
    "eps_privacy",
    "fidelity",
    "holevo_chi",
    "keywise_privacy",
    "load_scenario",
    "measure",
    "measurement_mutual_info",
    "mu1_uniformity",
    "mu2_fidelity",
    "mu2_privacy",
    "partial_trace",
    "phi_pair",
    "purify",
    "relative_entropy",
    "repeated_chain",
    "repeated_qkd",
    "run_protocol",
    "shannon_distinguishability",
    "singlet_fidelity",
    "tensor",
    "trace_distance",
    "tree_total",
    "triangle_decomposition",
    "von_neumann_entropy",
]
