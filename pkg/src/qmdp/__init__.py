"""Quantum Markov decision processes.

A numerical toolkit for decision processes whose states are density
operators and whose policies are quantum channels: channel algebra and
CPTP validation, embeddings of finite classical MDPs, structural policy
classes, grid/net quantization, and discounted value iteration.
"""

from .approximation import (
    ChannelNet,
    NetSources,
    QOMDPModel,
    StateGrid,
    build_channel_net,
    build_finite_action_qmdp,
    build_state_grid,
    extend_policy,
    monte_carlo_value,
    nearest_grid_point,
    outcome_distribution,
    qomdp_step,
    quantize_cqomdp,
)
from .classical import (
    FiniteMDP,
    dmdp_cost,
    dmdp_rollout,
    dmdp_transition,
    evaluate_policy,
    lift_policy,
    value_iteration,
)
from .embedding import (
    EmbeddedModel,
    embed_classical_policy,
    embed_cost,
    embed_distribution,
    embed_model,
    embed_transition_channel,
    verify_equivalence,
)
from .errors import ConvergenceError, DimensionMismatch, InvariantError, ParseError, QmdpError
from .policies import (
    MarkovQuantumPolicy,
    PhiFamily,
    check_classical_reversibility,
    check_full_reversibility,
    classify_policy,
    closed_loop_channel,
    open_loop_channel,
    random_phi_family,
)
from .quantum import (
    DensityOperator,
    HermitianObservable,
    KrausChannel,
    Tolerances,
    apply_channel,
    choi_matrix,
    compose,
    fidelity_pure,
    hs_distance,
    hs_inner,
    partial_trace,
    partial_trace_channel,
    tensor_product,
    unitary_channel,
    validate_channel,
)
from .solver import (
    GreedyPolicy,
    GridValueFunction,
    SolverConfig,
    bellman_apply,
    rollout,
    state_prep_demo,
    value_iterate,
)

__version__ = "0.1.0"
