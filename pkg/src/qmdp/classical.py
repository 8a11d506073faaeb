"""Finite classical MDPs and their deterministic lift over distributions.

Array conventions: the transition tensor ``p`` has shape
``(n_states, n_states, n_actions)`` with ``p[y, x, a] = P(y | x, a)``;
costs ``c`` have shape ``(n_states, n_actions)``; a stochastic kernel from
states to actions has shape ``(n_actions, n_states)`` with columns summing
to one; distributions are plain 1-D (or 2-D, for state-action) arrays on
the simplex.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, InvariantError

__all__ = [
    "FiniteMDP",
    "check_distribution",
    "check_kernel",
    "value_iteration",
    "evaluate_policy",
    "dmdp_transition",
    "dmdp_cost",
    "lift_policy",
    "dmdp_rollout",
]

_SIMPLEX_TOL = 1e-12


@dataclass(frozen=True)
class FiniteMDP:
    """A discounted finite MDP ``(X, A, p, c, beta)``."""

    p: np.ndarray
    c: np.ndarray
    beta: float

    def __post_init__(self):
        # C order: summation order (and hence bit-level results) must not
        # depend on whether the tensor arrived transposed from a file
        p = np.array(self.p, dtype=float, copy=True, order="C")
        c = np.array(self.c, dtype=float, copy=True, order="C")
        p.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "c", c)
        if p.ndim != 3 or p.shape[0] != p.shape[1]:
            raise InvariantError("transition tensor must have shape (Y, X, A) with Y == X")
        if c.shape != (p.shape[1], p.shape[2]):
            raise InvariantError(f"cost shape {c.shape} != (n_states, n_actions)")
        if not (0.0 < self.beta < 1.0):
            raise InvariantError(f"discount beta={self.beta} must lie strictly in (0, 1)")
        if np.any(p < -_SIMPLEX_TOL):
            raise InvariantError("transition tensor has negative entries")
        col_sums = p.sum(axis=0)
        worst = float(np.max(np.abs(col_sums - 1.0)))
        if worst > _SIMPLEX_TOL:
            raise InvariantError(f"transition columns sum to 1 +/- {worst:.3e}")

    @property
    def n_states(self) -> int:
        return self.p.shape[1]

    @property
    def n_actions(self) -> int:
        return self.p.shape[2]


def check_distribution(weights, tol: float = _SIMPLEX_TOL) -> np.ndarray:
    """Validate membership in the probability simplex; returns the array."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < -tol):
        raise InvariantError("distribution has negative weights")
    total = float(w.sum())
    if abs(total - 1.0) > tol:
        raise InvariantError(f"distribution sums to {total}, not 1")
    return w


def check_kernel(pi, tol: float = _SIMPLEX_TOL) -> np.ndarray:
    """Validate a stochastic kernel pi[a, x]; each column is a distribution."""
    arr = np.asarray(pi, dtype=float)
    if arr.ndim != 2:
        raise InvariantError("kernel must be a 2-D array pi[a, x]")
    if np.any(arr < -tol):
        raise InvariantError("kernel has negative entries")
    worst = float(np.max(np.abs(arr.sum(axis=0) - 1.0)))
    if worst > tol:
        raise InvariantError(f"kernel columns sum to 1 +/- {worst:.3e}")
    return arr


def _value_iteration_info(mdp: FiniteMDP, eps: float, max_iters: int | None = None):
    if eps <= 0:
        raise InvariantError("eps must be positive")
    beta = mdp.beta
    threshold = eps * (1.0 - beta) / (2.0 * beta)
    if max_iters is None:
        # residuals shrink at rate beta from at most max|c|/(1-beta)
        span = max(float(np.max(np.abs(mdp.c))), 1.0) / (1.0 - beta)
        max_iters = int(np.ceil(np.log(threshold / (span + 1.0)) / np.log(beta))) + 64
    values = np.zeros(mdp.n_states)
    residual = np.inf
    for iteration in range(1, max_iters + 1):
        q = mdp.c + beta * np.einsum("yxa,y->xa", mdp.p, values)
        new_values = q.min(axis=1)
        residual = float(np.max(np.abs(new_values - values)))
        values = new_values
        if residual <= threshold:
            break
    else:
        raise ConvergenceError(
            f"value iteration did not reach tolerance in {max_iters} sweeps", residual
        )
    q = mdp.c + beta * np.einsum("yxa,y->xa", mdp.p, values)
    policy = np.argmin(q, axis=1)
    return values, policy, iteration, residual


def value_iteration(mdp: FiniteMDP, eps: float):
    """Solve the discounted MDP to sup-norm accuracy ``eps``.

    Sweeps stop once successive iterates differ by at most
    ``eps (1 - beta) / (2 beta)``, the standard stopping rule that
    guarantees the returned values are within ``eps`` of the fixed point.
    The greedy policy breaks ties toward the lowest action index.
    """
    values, policy, _, _ = _value_iteration_info(mdp, eps)
    return values, policy


def evaluate_policy(mdp: FiniteMDP, pi, mu0) -> float:
    """Exact discounted cost of a stationary kernel from an initial distribution.

    Solves ``(I - beta P_pi) v = c_pi`` and returns ``<mu0, v>``.
    """
    kernel = check_kernel(pi)
    mu = check_distribution(mu0)
    if kernel.shape != (mdp.n_actions, mdp.n_states) or mu.shape != (mdp.n_states,):
        raise InvariantError("kernel or initial distribution has wrong shape")
    p_pi = np.einsum("ax,yxa->xy", kernel, mdp.p)
    c_pi = np.einsum("ax,xa->x", kernel, mdp.c)
    values = np.linalg.solve(np.eye(mdp.n_states) - mdp.beta * p_pi, c_pi)
    return float(mu @ values)


def dmdp_transition(mdp: FiniteMDP, nu) -> np.ndarray:
    """Deterministic lift of the dynamics: ``P(nu)(y) = sum_{x,a} p(y|x,a) nu(x,a)``."""
    joint = check_distribution(nu)
    if joint.shape != (mdp.n_states, mdp.n_actions):
        raise InvariantError("state-action distribution has wrong shape")
    return np.einsum("yxa,xa->y", mdp.p, joint)


def dmdp_cost(mdp: FiniteMDP, nu) -> float:
    """Lifted one-stage cost ``<c, nu>``."""
    joint = check_distribution(nu)
    if joint.shape != (mdp.n_states, mdp.n_actions):
        raise InvariantError("state-action distribution has wrong shape")
    return float(np.sum(mdp.c * joint))


def lift_policy(pi, mu) -> np.ndarray:
    """Product distribution ``nu(x, a) = mu(x) pi(a|x)``; marginal over A is mu."""
    kernel = check_kernel(pi)
    weights = check_distribution(mu)
    if kernel.shape[1] != weights.shape[0]:
        raise InvariantError("kernel and distribution disagree on the state count")
    return weights[:, None] * kernel.T


def dmdp_rollout(mdp: FiniteMDP, kernels, mu0, horizon: int):
    """Run the lifted deterministic recursion for ``horizon`` steps.

    ``kernels`` is a sequence of stochastic kernels, reused cyclically from
    its last element if shorter than the horizon (so a single kernel gives
    the stationary recursion).  Returns the visited state distributions,
    state-action distributions, and per-step costs.
    """
    if horizon < 1:
        raise InvariantError("horizon must be at least 1")
    kernels = [check_kernel(k) for k in kernels]
    if not kernels:
        raise InvariantError("at least one kernel is required")
    mu = check_distribution(mu0)
    mus, nus, costs = [mu], [], []
    for t in range(horizon):
        kernel = kernels[t] if t < len(kernels) else kernels[-1]
        nu = lift_policy(kernel, mu)
        nus.append(nu)
        costs.append(dmdp_cost(mdp, nu))
        mu = dmdp_transition(mdp, nu)
        mus.append(mu)
    return mus, nus, costs
