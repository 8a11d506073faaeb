"""Embedding of finite classical MDPs into the quantum formalism.

Distributions become diagonal density operators, the lifted transition map
becomes a channel ``H_X (x) H_A -> H_X`` with Kraus operators
``sqrt(p(y|x,a)) |y><x,a|``, stochastic kernels become channels
``H_X -> H_X (x) H_A`` with Kraus operators ``sqrt(pi(a|x)) |x,a><x|``, and
the cost matrix becomes the diagonal observable ``diag{c(x,a)}``.  The
basis index for the pair ``(x, a)`` is ``x * n_actions + a`` throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classical import FiniteMDP, check_distribution, check_kernel, dmdp_rollout
from .errors import InvariantError
from .quantum import (
    DensityOperator,
    HermitianObservable,
    KrausChannel,
    _checked,
    apply_kraus,
    expectation,
)

__all__ = [
    "EmbeddedModel",
    "embed_distribution",
    "embed_transition_channel",
    "embed_classical_policy",
    "embed_cost",
    "embed_model",
    "EquivalenceReport",
    "verify_equivalence",
]


@dataclass(frozen=True)
class EmbeddedModel:
    """A classical MDP re-expressed with quantum components."""

    dim_x: int
    dim_a: int
    transition_channel: KrausChannel
    cost: HermitianObservable
    beta: float
    source: FiniteMDP | None = None

    def __post_init__(self):
        if self.transition_channel.in_dim != self.dim_x * self.dim_a:
            raise InvariantError("transition channel input dim != dim_x * dim_a")
        if self.transition_channel.out_dim != self.dim_x:
            raise InvariantError("transition channel output dim != dim_x")
        if self.cost.dim != self.dim_x * self.dim_a:
            raise InvariantError("cost observable dim != dim_x * dim_a")
        if not (0.0 < self.beta < 1.0):
            raise InvariantError("beta must lie strictly in (0, 1)")


def embed_distribution(mu) -> DensityOperator:
    """Diagonal state ``diag{mu(e)}`` carrying a classical distribution."""
    weights = check_distribution(np.asarray(mu, dtype=float).reshape(-1), tol=1e-9)
    return DensityOperator.diagonal(np.clip(weights, 0.0, None))


def embed_transition_channel(mdp: FiniteMDP) -> KrausChannel:
    """Quantum form of the lifted dynamics; one Kraus operator per (y, x, a)
    with nonzero transition probability."""
    dim_x, dim_a = mdp.n_states, mdp.n_actions
    dim_xa = dim_x * dim_a
    ops = []
    for y in range(dim_x):
        for x in range(dim_x):
            for a in range(dim_a):
                prob = mdp.p[y, x, a]
                if prob <= 0.0:
                    continue
                k = np.zeros((dim_x, dim_xa), dtype=np.complex128)
                k[y, x * dim_a + a] = np.sqrt(prob)
                ops.append(k)
    return _checked(KrausChannel(dim_xa, dim_x, tuple(ops)))


def embed_classical_policy(pi) -> KrausChannel:
    """Quantum form of a stochastic kernel; Kraus operators
    ``sqrt(pi(a|x)) |x,a><x|`` indexed over pairs with nonzero weight."""
    kernel = check_kernel(pi, tol=1e-9)
    dim_a, dim_x = kernel.shape
    dim_xa = dim_x * dim_a
    ops = []
    for x in range(dim_x):
        for a in range(dim_a):
            weight = kernel[a, x]
            if weight <= 0.0:
                continue
            k = np.zeros((dim_xa, dim_x), dtype=np.complex128)
            k[x * dim_a + a, x] = np.sqrt(weight)
            ops.append(k)
    return _checked(KrausChannel(dim_x, dim_xa, tuple(ops)))


def embed_cost(mdp: FiniteMDP) -> HermitianObservable:
    """Diagonal observable with entries ``c(x, a)`` in the pair basis."""
    return HermitianObservable(np.diag(mdp.c.reshape(-1).astype(np.complex128)))


def embed_model(mdp: FiniteMDP) -> EmbeddedModel:
    """Bundle the embedded dynamics and cost of a classical MDP."""
    return EmbeddedModel(
        dim_x=mdp.n_states,
        dim_a=mdp.n_actions,
        transition_channel=embed_transition_channel(mdp),
        cost=embed_cost(mdp),
        beta=mdp.beta,
        source=mdp,
    )


@dataclass(frozen=True)
class EquivalenceReport:
    """Worst-case gaps between the classical recursion and its quantum twin."""

    horizon: int
    max_cost_gap: float
    max_state_gap: float

    def as_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "max_cost_gap": self.max_cost_gap,
            "max_state_gap": self.max_state_gap,
        }


def verify_equivalence(mdp: FiniteMDP, pi, mu0, horizon: int) -> EquivalenceReport:
    """Run the lifted classical recursion and the embedded quantum recursion
    side by side and report the largest cost and state discrepancies."""
    if horizon < 1:
        raise InvariantError("horizon must be at least 1")
    kernel = check_kernel(pi)
    mus, nus, costs = dmdp_rollout(mdp, [kernel], mu0, horizon)

    transition = embed_transition_channel(mdp)
    policy_channel = embed_classical_policy(kernel)
    cost_matrix = embed_cost(mdp).matrix

    rho = embed_distribution(mu0).matrix
    max_cost_gap = 0.0
    max_state_gap = 0.0
    for t in range(horizon):
        state_gap = float(np.linalg.norm(rho - np.diag(mus[t].astype(np.complex128))))
        max_state_gap = max(max_state_gap, state_gap)
        sigma = apply_kraus(policy_channel.stack, rho)
        action_gap = float(
            np.linalg.norm(sigma - np.diag(nus[t].reshape(-1).astype(np.complex128)))
        )
        max_state_gap = max(max_state_gap, action_gap)
        max_cost_gap = max(max_cost_gap, abs(expectation(cost_matrix, sigma) - costs[t]))
        rho = apply_kraus(transition.stack, sigma)
    return EquivalenceReport(horizon, max_cost_gap, max_state_gap)
