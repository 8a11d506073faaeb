"""Grid-restricted value iteration for channel-action decision models.

The dynamic programming operator

    (L V)(rho_i) = min_gamma [ <c, gamma(rho_i)> + beta V(Q(N(gamma(rho_i)))) ]

is evaluated over a finite state grid (with Q the nearest-grid map, so the
value function is piecewise constant) and a finite channel net.  Because Q
maps back into the grid, L is a beta-contraction on grid value vectors and
value iteration from zero converges geometrically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .approximation import ChannelNet, StateGrid, build_channel_net, build_state_grid, nearest_grid_point
from .errors import ConvergenceError, DimensionMismatch, InvariantError
from .policies import MarkovQuantumPolicy, open_loop_channel
from .quantum import (
    DensityOperator,
    HermitianObservable,
    KrausChannel,
    _checked,
    apply_kraus,
    expectation,
)

__all__ = [
    "GridValueFunction",
    "SolverConfig",
    "GreedyPolicy",
    "BellmanTable",
    "SolveResult",
    "RolloutResult",
    "build_bellman_table",
    "bellman_apply",
    "value_iterate",
    "rollout",
    "measure_prepare_channel",
    "state_prep_cost",
    "StatePrepReport",
    "state_prep_demo",
]


@dataclass(frozen=True)
class GridValueFunction:
    """A value vector anchored to a state grid."""

    grid: StateGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if vals.shape != (len(self.grid),):
            raise InvariantError("value vector length must match the grid size")
        if not np.all(np.isfinite(vals)):
            raise InvariantError("values must be finite")


@dataclass(frozen=True)
class SolverConfig:
    beta: float
    eps: float = 1e-6
    max_iters: int = 100_000
    horizon_for_rollout: int = 200

    def __post_init__(self):
        if not (0.0 < self.beta < 1.0):
            raise InvariantError("beta must lie strictly in (0, 1)")
        if self.eps <= 0:
            raise InvariantError("eps must be positive")


@dataclass(frozen=True)
class GreedyPolicy:
    """Per-grid-point channel choices, resolved by nearest-grid lookup."""

    indices: np.ndarray
    net: ChannelNet
    grid: StateGrid

    def __post_init__(self):
        idx = np.array(self.indices, dtype=int, copy=True)
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        if idx.shape != (len(self.grid),):
            raise InvariantError("policy table length must match the grid size")
        if idx.size and (idx.min() < 0 or idx.max() >= len(self.net)):
            raise InvariantError("policy points outside the channel net")

    def channel_for(self, rho_matrix: np.ndarray) -> KrausChannel:
        return self.net.channels[int(self.indices[nearest_grid_point(rho_matrix, self.grid)])]


@dataclass(frozen=True)
class BellmanTable:
    """Precompiled one-step data: stage costs and nearest-grid successors.

    ``stage[i, k]`` is the cost of channel k at grid point i and
    ``next_idx[i, k]`` the grid index of the quantized successor, so a sweep
    is a cheap gather-and-min over the table.
    """

    stage: np.ndarray
    next_idx: np.ndarray

    def apply(self, values: np.ndarray, beta: float):
        q = self.stage + beta * values[self.next_idx]
        return q.min(axis=1), q.argmin(axis=1)


def build_bellman_table(
    grid: StateGrid,
    net: ChannelNet,
    transition: KrausChannel,
    cost: HermitianObservable,
    threads: int = 1,
) -> BellmanTable:
    if transition.out_dim != grid.dim:
        raise DimensionMismatch("transition output dim != grid dim")
    if cost.dim != transition.in_dim:
        raise DimensionMismatch("cost dim != transition input dim")
    for gamma in net.channels:
        if gamma.in_dim != grid.dim or gamma.out_dim != transition.in_dim:
            raise DimensionMismatch("net channel dims do not match grid/transition")
    k_grid, k_net = len(grid), len(net)
    stage = np.zeros((k_grid, k_net))
    next_idx = np.zeros((k_grid, k_net), dtype=int)

    def fill_row(i: int) -> None:
        mat = grid.points[i].matrix
        for k, gamma in enumerate(net.channels):
            sigma = apply_kraus(gamma.stack, mat)
            stage[i, k] = expectation(cost.matrix, sigma)
            successor = apply_kraus(transition.stack, sigma)
            next_idx[i, k] = nearest_grid_point(successor, grid)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill_row, range(k_grid)))
    else:
        for i in range(k_grid):
            fill_row(i)
    return BellmanTable(stage=stage, next_idx=next_idx)


def bellman_apply(
    V: GridValueFunction,
    net: ChannelNet,
    transition: KrausChannel,
    cost: HermitianObservable,
    beta: float,
) -> GridValueFunction:
    """One application of the grid dynamic programming operator."""
    table = build_bellman_table(V.grid, net, transition, cost)
    new_values, _ = table.apply(V.values, beta)
    return GridValueFunction(V.grid, new_values)


@dataclass(frozen=True)
class SolveResult:
    values: GridValueFunction
    policy: GreedyPolicy
    iters: int
    residual: float
    residuals: tuple
    converged: bool


def value_iterate(
    config: SolverConfig,
    net: ChannelNet,
    transition: KrausChannel,
    cost: HermitianObservable,
    grid: StateGrid,
    threads: int = 1,
) -> SolveResult:
    """Iterate the grid operator from zero until the successive sup-norm
    difference drops below ``eps (1 - beta) / (2 beta)``; the returned values
    are then within ``eps`` of the grid fixed point.  Greedy ties break
    toward the lowest channel index.

    ``threads`` caps the workers used to compile the one-step table; the
    sweeps themselves are sequential and the result does not depend on the
    worker count.
    """
    table = build_bellman_table(grid, net, transition, cost, threads=threads)
    beta = config.beta
    threshold = config.eps * (1.0 - beta) / (2.0 * beta)
    values = np.zeros(len(grid))
    residuals = []
    converged = False
    iters = 0
    for iters in range(1, config.max_iters + 1):
        new_values, _ = table.apply(values, beta)
        residual = float(np.max(np.abs(new_values - values)))
        residuals.append(residual)
        values = new_values
        if residual <= threshold:
            converged = True
            break
    _, greedy = table.apply(values, beta)
    result = SolveResult(
        values=GridValueFunction(grid, values),
        policy=GreedyPolicy(indices=greedy, net=net, grid=grid),
        iters=iters,
        residual=residuals[-1] if residuals else 0.0,
        residuals=tuple(residuals),
        converged=converged,
    )
    if not converged:
        raise ConvergenceError(
            f"value iteration did not converge in {config.max_iters} sweeps"
            f" (residual {result.residual:.3e})",
            result.residual,
        )
    return result


@dataclass(frozen=True)
class RolloutResult:
    value: float
    truncation_bound: float
    stage_costs: tuple

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "truncation_bound": self.truncation_bound,
            "stage_costs": list(self.stage_costs),
        }


def rollout(
    policy,
    transition: KrausChannel,
    cost: HermitianObservable,
    rho0: DensityOperator,
    beta: float,
    horizon: int,
    criterion: str = "discounted",
) -> RolloutResult:
    """Exact deterministic rollout of a policy.

    ``policy`` is a :class:`MarkovQuantumPolicy` or a :class:`GreedyPolicy`.
    For the discounted criterion the reported bound
    ``beta^horizon ||c||_op / (1 - beta)`` caps the truncation error; the
    finite-horizon criterion sums undiscounted stage costs over the horizon.
    """
    if horizon < 1:
        raise InvariantError("horizon must be at least 1")
    if criterion not in ("discounted", "finite_horizon"):
        raise InvariantError(f"unknown criterion {criterion!r}")

    if isinstance(policy, MarkovQuantumPolicy):
        pick = policy.channel_at
    elif isinstance(policy, GreedyPolicy):
        pick = None
    else:
        raise InvariantError("policy must be a MarkovQuantumPolicy or GreedyPolicy")

    mat = rho0.matrix
    costs = []
    for t in range(horizon):
        gamma = pick(t) if pick is not None else policy.channel_for(mat)
        sigma = apply_kraus(gamma.stack, mat)
        costs.append(expectation(cost.matrix, sigma))
        mat = apply_kraus(transition.stack, sigma)

    if criterion == "discounted":
        weights = beta ** np.arange(horizon)
        value = float(weights @ np.asarray(costs))
        bound = beta**horizon * cost.operator_norm() / (1.0 - beta)
    else:
        value = float(np.sum(costs))
        bound = 0.0
    return RolloutResult(value=value, truncation_bound=bound, stage_costs=tuple(costs))


def measure_prepare_channel(povm, dim_x: int) -> KrausChannel:
    """Quantum-to-classical channel ``sigma -> sum_x Tr(L_x sigma) |x><x|``.

    ``povm`` is a list of ``dim_x`` positive operators summing to the
    identity on the composite input space.
    """
    elements = [np.asarray(e, dtype=np.complex128) for e in povm]
    if len(elements) != dim_x:
        raise InvariantError("need one POVM element per basis state")
    dim_in = elements[0].shape[0]
    total = sum(elements)
    if float(np.linalg.norm(total - np.eye(dim_in))) > 1e-9:
        raise InvariantError("POVM elements do not sum to the identity")
    ops = []
    for x, element in enumerate(elements):
        if float(np.max(np.abs(element - element.conj().T))) > 1e-9:
            raise InvariantError("POVM element is not Hermitian")
        evals, evecs = np.linalg.eigh(element)
        if float(evals.min()) < -1e-9:
            raise InvariantError("POVM element is not positive semi-definite")
        for j in range(evals.size):
            lam = float(evals[j])
            if lam <= 1e-15:
                continue
            k = np.zeros((dim_x, dim_in), dtype=np.complex128)
            k[x, :] = np.sqrt(lam) * evecs[:, j].conj()
            ops.append(k)
    return _checked(KrausChannel(dim_in, dim_x, tuple(ops)))


def default_state_prep_povm(dim_x: int, dim_a: int) -> list:
    """Computational-basis projectors on the composite space, coarse-grained
    over the action factor: ``L_x = |x><x| (x) Id_A``."""
    povm = []
    for x in range(dim_x):
        proj = np.zeros((dim_x, dim_x), dtype=np.complex128)
        proj[x, x] = 1.0
        povm.append(np.kron(proj, np.eye(dim_a, dtype=np.complex128)))
    return povm


def state_prep_cost(target, dim_x: int, dim_a: int) -> HermitianObservable:
    """Infidelity observable ``Id - |psi><psi| (x) Id_A`` for a pure target."""
    v = np.asarray(target, dtype=np.complex128).reshape(-1)
    norm = float(np.linalg.norm(v))
    if abs(norm - 1.0) > 1e-9:
        raise InvariantError(f"target norm {norm} is not 1")
    if v.size != dim_x:
        raise DimensionMismatch(f"target length {v.size} != dim_x {dim_x}")
    proj = np.outer(v, v.conj())
    dim = dim_x * dim_a
    return HermitianObservable(np.eye(dim) - np.kron(proj, np.eye(dim_a)))


@dataclass(frozen=True)
class StatePrepReport:
    solve: SolveResult
    grid: StateGrid
    net: ChannelNet
    rollout_result: RolloutResult
    fidelities: tuple
    baseline_value: float
    baseline_xi_index: int


def state_prep_demo(
    dim_x: int,
    dim_a: int,
    target,
    config: SolverConfig,
    n: int,
    seed: int,
    rho0: DensityOperator | None = None,
    povm=None,
) -> StatePrepReport:
    """Drive a system toward a pure target through a measure-and-prepare
    transition channel.

    Builds the grid/net at resolution ``n``, solves by value iteration,
    rolls the greedy policy out of ``rho0`` (maximally mixed by default),
    records the per-step fidelity to the target, and sweeps every appending
    channel in the net as a stationary baseline.
    """
    target_vec = np.asarray(target, dtype=np.complex128).reshape(-1)
    povm = povm if povm is not None else default_state_prep_povm(dim_x, dim_a)
    transition = measure_prepare_channel(povm, dim_x)
    if transition.in_dim != dim_x * dim_a or transition.out_dim != dim_x:
        raise DimensionMismatch("POVM dimensions do not match dim_x, dim_a")
    cost = state_prep_cost(target_vec, dim_x, dim_a)
    grid = build_state_grid(dim_x, n, seed)
    net = build_channel_net(dim_x, dim_a, n, seed)
    result = value_iterate(config, net, transition, cost, grid)

    start = rho0 if rho0 is not None else DensityOperator.maximally_mixed(dim_x)
    horizon = config.horizon_for_rollout
    roll = rollout(result.policy, transition, cost, start, config.beta, horizon)

    proj = np.outer(target_vec, target_vec.conj())
    fidelities = []
    mat = start.matrix
    for t in range(horizon):
        fidelities.append(float(np.einsum("ij,ji->", proj, mat).real))
        gamma = result.policy.channel_for(mat)
        mat = apply_kraus(transition.stack, apply_kraus(gamma.stack, mat))

    xi_grid = build_state_grid(dim_a, n, net.provenance["xi_grid"]["seed"], radius_samples=0)
    best_value, best_idx = np.inf, -1
    for idx, xi in enumerate(xi_grid.points):
        gamma = open_loop_channel(xi, dim_x)
        policy = MarkovQuantumPolicy(tail=gamma, tag="open_loop")
        value = rollout(policy, transition, cost, start, config.beta, horizon).value
        if value < best_value - 1e-15:
            best_value, best_idx = value, idx
    return StatePrepReport(
        solve=result,
        grid=grid,
        net=net,
        rollout_result=roll,
        fidelities=tuple(fidelities),
        baseline_value=float(best_value),
        baseline_xi_index=best_idx,
    )
