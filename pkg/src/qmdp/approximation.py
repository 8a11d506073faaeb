"""Finite approximations: state grids over density operators, channel nets,
measured-channel decision models, and their reduction to finite MDPs.

Two pipelines live here.  A measured-channel model (finite actions, Kraus
outcomes driving stochastic state jumps) is quantized over a state grid into
a plain :class:`~qmdp.classical.FiniteMDP` whose optimal policy extends back
to all states by nearest-grid lookup.  Conversely, a model with a continuum
of policy channels is restricted to a structured finite net of channels,
which makes it a measured-channel model with deterministic dynamics.

Grids and nets are deterministic functions of their seed, and are nested
along divisibility chains: the construction for resolution ``n`` is a
subset of the one for ``n'`` whenever ``n`` divides ``n'`` and the seed is
shared.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .classical import FiniteMDP
from .embedding import EmbeddedModel, embed_classical_policy
from .errors import DimensionMismatch, InvariantError
from .policies import closed_loop_channel, open_loop_channel, random_phi_family
from .quantum import (
    DensityOperator,
    HermitianObservable,
    KrausChannel,
    adjoint_apply,
    apply_kraus,
    compose,
    expectation,
    haar_unitary,
    random_density,
    validate_channel,
)

__all__ = [
    "PROB_FLOOR",
    "QOMDPModel",
    "StateGrid",
    "ChannelNet",
    "NetSources",
    "simplex_lattice",
    "build_state_grid",
    "estimate_covering_radius",
    "nearest_grid_point",
    "outcome_distribution",
    "qomdp_step",
    "monte_carlo_value",
    "quantize_cqomdp",
    "extend_policy",
    "build_channel_net",
    "build_finite_action_qmdp",
]

# Guard against conditioning on a measurement outcome of vanishing probability.
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class QOMDPModel:
    """Finite-action model whose state jumps with the Kraus outcome of a
    per-action measurement channel, then evolves by a per-action channel.

    ``divisible[a]`` carries the measurement (one Kraus operator per
    observation; shorter lists are zero-padded), ``indivisible[a]`` the
    post-measurement evolution, and ``cost[a]`` the observable whose pairing
    with the state is the stage cost.
    """

    dim: int
    actions: tuple
    observations: tuple
    divisible: tuple
    indivisible: tuple
    cost: tuple
    beta: float

    def __post_init__(self):
        actions = tuple(self.actions)
        observations = tuple(self.observations)
        if not actions or not observations:
            raise InvariantError("actions and observations must be nonempty")
        if not (0.0 < self.beta < 1.0):
            raise InvariantError("beta must lie strictly in (0, 1)")
        if not (len(self.divisible) == len(self.indivisible) == len(self.cost) == len(actions)):
            raise InvariantError("per-action tables must align with the action list")
        n_obs = len(observations)
        padded = []
        for ch in self.divisible:
            if ch.in_dim != self.dim or ch.out_dim != self.dim:
                raise DimensionMismatch("divisible channel dims must equal the state dim")
            if len(ch.kraus) > n_obs:
                raise InvariantError(
                    f"divisible channel has {len(ch.kraus)} Kraus operators > {n_obs} observations"
                )
            if len(ch.kraus) < n_obs:
                zeros = tuple(
                    np.zeros((self.dim, self.dim), dtype=np.complex128)
                    for _ in range(n_obs - len(ch.kraus))
                )
                ch = KrausChannel(ch.in_dim, ch.out_dim, ch.kraus + zeros)
            padded.append(ch)
        for ch in self.indivisible:
            if ch.in_dim != self.dim or ch.out_dim != self.dim:
                raise DimensionMismatch("indivisible channel dims must equal the state dim")
        for ch in tuple(padded) + tuple(self.indivisible):
            report = validate_channel(ch)
            if not report.passed:
                raise InvariantError(
                    f"model channel fails CPTP audit (residual {report.completeness_residual:.3e},"
                    f" choi min eig {report.choi_min_eigenvalue:.3e})"
                )
        for obs in self.cost:
            if obs.dim != self.dim:
                raise DimensionMismatch("cost observable dim must equal the state dim")
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "observations", observations)
        object.__setattr__(self, "divisible", tuple(padded))
        object.__setattr__(self, "indivisible", tuple(self.indivisible))
        object.__setattr__(self, "cost", tuple(self.cost))

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def n_observations(self) -> int:
        return len(self.observations)

    def action_index(self, a) -> int:
        if isinstance(a, (int, np.integer)):
            if not 0 <= a < len(self.actions):
                raise InvariantError(f"action index {a} out of range")
            return int(a)
        try:
            return self.actions.index(a)
        except ValueError:
            raise InvariantError(f"unknown action {a!r}") from None


@dataclass(frozen=True)
class StateGrid:
    """A finite set of states used as a quantization of the state space."""

    points: tuple
    resolution: float
    provenance: dict
    covering_radius_estimate: float
    stack: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        pts = tuple(self.points)
        if not pts:
            raise InvariantError("grid needs at least one point")
        dims = {p.dim for p in pts}
        if len(dims) != 1:
            raise InvariantError("grid points must share a dimension")
        stack = np.stack([p.matrix for p in pts])
        stack.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "stack", stack)

    @property
    def dim(self) -> int:
        return self.points[0].dim

    def __len__(self) -> int:
        return len(self.points)

    @cached_property
    def _vecs(self) -> np.ndarray:
        return self.stack.reshape(len(self.points), -1)

    @cached_property
    def _vec_norms(self) -> np.ndarray:
        return np.sum(np.abs(self._vecs) ** 2, axis=1)

    def nearest_batch(self, states: np.ndarray) -> np.ndarray:
        """Nearest-grid indices for a batch of state matrices (n, dim, dim).

        Uses ``||s - g||^2 = ||s||^2 + ||g||^2 - 2 Re<s, g>`` so the batch
        reduces to one matrix product; ties break to the lowest index.
        """
        flat = states.reshape(states.shape[0], -1)
        cross = (flat @ self._vecs.conj().T).real
        d2 = np.sum(np.abs(flat) ** 2, axis=1)[:, None] + self._vec_norms[None, :] - 2.0 * cross
        return np.argmin(d2, axis=1)


@dataclass(frozen=True)
class NetSources:
    """Which families of channels a structured net draws from."""

    classical: bool = True
    appending: bool = True
    closed_loop: bool = True

    def as_dict(self) -> dict:
        return {
            "classical": self.classical,
            "appending": self.appending,
            "closed_loop": self.closed_loop,
        }


@dataclass(frozen=True)
class ChannelNet:
    """A finite set of policy channels ``H_X -> H_X (x) H_A``."""

    channels: tuple
    provenance: dict

    def __post_init__(self):
        chans = tuple(self.channels)
        if not chans:
            raise InvariantError("channel net must be nonempty")
        dims = {(ch.in_dim, ch.out_dim) for ch in chans}
        if len(dims) != 1:
            raise InvariantError("net channels must share dimensions")
        object.__setattr__(self, "channels", chans)

    def __len__(self) -> int:
        return len(self.channels)


def simplex_lattice(n: int, parts: int):
    """All nonnegative integer vectors of length ``parts`` summing to ``n``,
    in lexicographic order."""
    if parts == 1:
        yield (n,)
        return
    for k in range(n + 1):
        for rest in simplex_lattice(n - k, parts - 1):
            yield (k,) + rest


def _distinct_append(points: list, candidate: DensityOperator, tol: float = 1e-12) -> None:
    for existing in points:
        if float(np.linalg.norm(existing.matrix - candidate.matrix)) <= tol:
            return
    points.append(candidate)


def build_state_grid(dim: int, n: int, seed: int, radius_samples: int = 2000) -> StateGrid:
    """Spectral-lattice grid over the states of a ``dim``-level system.

    The grid always contains the classical basis states and the maximally
    mixed state; on top it places every eigenvalue vector of the simplex
    lattice of mesh ``1/n`` conjugated by ``2n`` seeded Haar unitaries (plus
    the identity).  The covering radius is estimated empirically on sampled
    random states and reported in the provenance, not certified.
    """
    if n < 1:
        raise InvariantError("resolution n must be at least 1")
    if seed is None:
        raise InvariantError("a seed is required for grid construction")
    master = np.random.SeedSequence(seed)
    child_points, child_probe = master.spawn(2)
    rng_points = np.random.default_rng(child_points)

    points: list = []
    for x in range(dim):
        _distinct_append(points, DensityOperator.basis_state(dim, x))
    _distinct_append(points, DensityOperator.maximally_mixed(dim))

    lattice = [np.array(v, dtype=float) / n for v in simplex_lattice(n, dim)]
    unitaries = [np.eye(dim, dtype=np.complex128)]
    unitaries.extend(haar_unitary(dim, rng_points) for _ in range(2 * n))
    for u in unitaries:
        for lam in lattice:
            mat = (u * lam) @ u.conj().T
            mat = (mat + mat.conj().T) / 2.0
            _distinct_append(points, DensityOperator(mat / np.trace(mat).real))

    grid = StateGrid(
        points=tuple(points),
        resolution=1.0 / n,
        provenance={
            "kind": "spectral_lattice",
            "dim": dim,
            "n": n,
            "seed": int(seed),
            "n_unitaries": 2 * n + 1,
            "radius_samples": radius_samples,
        },
        covering_radius_estimate=0.0,
    )
    radius = estimate_covering_radius(grid, radius_samples, np.random.default_rng(child_probe))
    return StateGrid(
        points=grid.points,
        resolution=grid.resolution,
        provenance=grid.provenance,
        covering_radius_estimate=radius,
    )


def estimate_covering_radius(grid: StateGrid, n_samples: int, rng: np.random.Generator) -> float:
    """Empirical covering radius: worst nearest-grid distance over sampled states."""
    worst = 0.0
    for _ in range(n_samples):
        mat = random_density(grid.dim, rng).matrix
        d2 = np.sum(np.abs(grid.stack - mat[None]) ** 2, axis=(1, 2))
        worst = max(worst, float(np.sqrt(d2.min())))
    return worst


def nearest_grid_point(rho, grid: StateGrid) -> int:
    """Index of the grid point closest in Hilbert-Schmidt distance; ties go to
    the lowest index."""
    mat = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho)
    if mat.shape != (grid.dim, grid.dim):
        raise DimensionMismatch(f"state shape {mat.shape} != grid dim {grid.dim}")
    return int(grid.nearest_batch(mat[None])[0])


def outcome_distribution(model: QOMDPModel, rho: DensityOperator, a) -> np.ndarray:
    """Probabilities ``Tr(K_m rho K_m^+)`` of each observation under action a."""
    idx = model.action_index(a)
    stack = model.divisible[idx].stack
    probs = np.einsum("mij,jk,mik->m", stack, rho.matrix, stack.conj()).real
    probs = np.clip(probs, 0.0, None)
    total = float(probs.sum())
    if abs(total - 1.0) > 1e-10:
        raise InvariantError(f"outcome probabilities sum to {total}, not 1")
    return probs


def _step_raw(model: QOMDPModel, mat: np.ndarray, a_idx: int, m_idx: int, prob: float) -> np.ndarray:
    k = model.divisible[a_idx].kraus[m_idx]
    intermediate = (k @ mat @ k.conj().T) / prob
    return apply_kraus(model.indivisible[a_idx].stack, intermediate)


def qomdp_step(model: QOMDPModel, rho: DensityOperator, a, m) -> DensityOperator:
    """Post-outcome state: Kraus-conditioned jump followed by the
    post-measurement channel.  Raises when the outcome probability is below
    the conditioning floor."""
    a_idx = model.action_index(a)
    m_idx = list(model.observations).index(m) if m in model.observations else int(m)
    if not 0 <= m_idx < model.n_observations:
        raise InvariantError(f"unknown observation {m!r}")
    k = model.divisible[a_idx].kraus[m_idx]
    prob = float(np.einsum("ij,jk,ik->", k, rho.matrix, k.conj()).real)
    if prob <= PROB_FLOOR:
        raise InvariantError(f"outcome probability {prob:.3e} below floor {PROB_FLOOR}")
    return DensityOperator(_step_raw(model, rho.matrix, a_idx, m_idx, prob))


# Trajectories are stepped together in batches of this size.
_MC_CHUNK = 2048


def _policy_actions(policy, states: np.ndarray) -> np.ndarray:
    batch = getattr(policy, "batch", None)
    if batch is not None:
        return np.asarray(batch(states), dtype=int)
    return np.fromiter((int(policy(s)) for s in states), dtype=int, count=states.shape[0])


def monte_carlo_value(
    model: QOMDPModel,
    policy: Callable[[np.ndarray], int],
    rho0: DensityOperator,
    horizon: int,
    n_traj: int,
    seed: int,
    threads: int = 1,
):
    """Sample mean and standard error of the truncated discounted cost.

    ``policy`` maps a density matrix to an action index (an optional
    ``policy.batch(states)`` method is used when present).  Each trajectory
    consumes one uniform variate per step from its own substream spawned
    from ``seed``, so results are reproducible and independent of batching
    and of the worker count.
    """
    if horizon < 1 or n_traj < 1:
        raise InvariantError("horizon and n_traj must be at least 1")
    if seed is None:
        raise InvariantError("a seed is required for Monte Carlo evaluation")
    betas = model.beta ** np.arange(horizon)
    cost_mats = [obs.matrix for obs in model.cost]
    div_stacks = [ch.stack for ch in model.divisible]
    indiv_stacks = [ch.stack for ch in model.indivisible]

    uniforms = np.empty((n_traj, horizon))
    for idx, child in enumerate(np.random.SeedSequence(seed).spawn(n_traj)):
        uniforms[idx] = np.random.default_rng(child).random(horizon)

    def run_chunk(bounds) -> np.ndarray:
        lo, hi = bounds
        size = hi - lo
        states = np.repeat(rho0.matrix[None, :, :], size, axis=0)
        acc = np.zeros(size)
        for t in range(horizon):
            actions = _policy_actions(policy, states)
            for a in np.unique(actions):
                mask = actions == a
                sub = states[mask]
                acc[mask] += betas[t] * np.einsum("ij,gji->g", cost_mats[a], sub).real
                stack = div_stacks[a]
                probs = np.einsum("mij,gjk,mik->gm", stack, sub, stack.conj()).real
                probs = np.clip(probs, 0.0, None)
                cum = np.cumsum(probs / probs.sum(axis=1, keepdims=True), axis=1)
                u = uniforms[lo:hi][mask, t]
                m_idx = np.minimum((cum < u[:, None]).sum(axis=1), probs.shape[1] - 1)
                k_sel = stack[m_idx]
                inter = k_sel @ sub @ k_sel.conj().transpose(0, 2, 1)
                norm = np.maximum(np.einsum("gii->g", inter).real, PROB_FLOOR)
                inter /= norm[:, None, None]
                istack = indiv_stacks[a]
                out = np.einsum("mij,gjk,mlk->gil", istack, inter, istack.conj())
                out = (out + out.conj().transpose(0, 2, 1)) / 2.0
                out /= np.einsum("gii->g", out).real[:, None, None]
                states[mask] = out
        return acc

    chunks = [(lo, min(lo + _MC_CHUNK, n_traj)) for lo in range(0, n_traj, _MC_CHUNK)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run_chunk, chunks))
    else:
        parts = [run_chunk(bounds) for bounds in chunks]
    totals = np.concatenate(parts)
    mean = float(totals.mean())
    stderr = float(totals.std(ddof=1) / np.sqrt(n_traj)) if n_traj > 1 else 0.0
    return mean, stderr


def quantize_cqomdp(model: QOMDPModel, grid: StateGrid, threads: int = 1) -> FiniteMDP:
    """Reduce a measured-channel model to a finite MDP over grid indices.

    Each cell is represented by its grid point: the cost is the exact stage
    cost there and the transition law pushes the outcome distribution
    forward through the dynamics and the nearest-grid map.
    """
    if grid.dim != model.dim:
        raise DimensionMismatch("grid dimension != model dimension")
    k = len(grid)
    n_actions = model.n_actions
    p = np.zeros((k, k, n_actions))
    c = np.zeros((k, n_actions))

    def fill_cell(cell):
        i, a = cell
        mat = grid.points[i].matrix
        c[i, a] = expectation(model.cost[a].matrix, mat)
        stack = model.divisible[a].stack
        probs = np.einsum("mij,jk,mik->m", stack, mat, stack.conj()).real
        probs = np.clip(probs, 0.0, None)
        for m_idx in range(probs.size):
            prob = float(probs[m_idx])
            if prob <= PROB_FLOOR:
                continue
            nxt = _step_raw(model, mat, a, m_idx, prob)
            p[nearest_grid_point(nxt, grid), i, a] += prob

    cells = [(i, a) for i in range(k) for a in range(n_actions)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill_cell, cells))
    else:
        for cell in cells:
            fill_cell(cell)

    totals = p.sum(axis=0)
    if float(np.max(np.abs(totals - 1.0))) > 1e-10:
        raise InvariantError("quantized transition rows do not sum to 1")
    p /= totals[None, :, :]
    return FiniteMDP(p=p, c=c, beta=model.beta)


class _GridLookupPolicy:
    """Action table over a grid, resolved by nearest-grid lookup."""

    def __init__(self, table: np.ndarray, grid: StateGrid):
        self.table = table
        self.grid = grid

    def __call__(self, mat: np.ndarray) -> int:
        return int(self.table[nearest_grid_point(mat, self.grid)])

    def batch(self, states: np.ndarray) -> np.ndarray:
        return self.table[self.grid.nearest_batch(states)]


def extend_policy(fn, grid: StateGrid) -> Callable[[np.ndarray], int]:
    """Extend a per-grid-index action table to all states by nearest lookup."""
    table = np.asarray(fn, dtype=int)
    if table.shape != (len(grid),):
        raise InvariantError("policy table length must match the grid size")
    return _GridLookupPolicy(table, grid)


def build_channel_net(
    dim_x: int,
    dim_a: int,
    n: int,
    seed: int,
    sources: NetSources = NetSources(),
    extra_channels: Sequence[KrausChannel] = (),
) -> ChannelNet:
    """Structured net of policy channels at resolution ``n``.

    Sources: (i) embeddings of every kernel whose columns lie on the simplex
    lattice of mesh ``1/n`` (this includes all deterministic kernels),
    (ii) appending channels over a seeded state grid on the action factor,
    (iii) seeded random phi-family channels, ``2n`` of them, and (iv) any
    user-supplied channels.  Nets with a shared seed are nested along
    divisibility of ``n``.  No covering-radius claim is made.
    """
    if n < 1:
        raise InvariantError("resolution n must be at least 1")
    if seed is None:
        raise InvariantError("a seed is required for net construction")
    master = np.random.SeedSequence(seed)
    child_xi, child_phi = master.spawn(2)
    xi_seed = int(child_xi.generate_state(1, dtype=np.uint64)[0])

    channels: list[KrausChannel] = []
    counts = {"classical": 0, "appending": 0, "closed_loop": 0, "extra": 0}

    if sources.classical:
        column_choices = [np.array(v, dtype=float) / n for v in simplex_lattice(n, dim_a)]
        index_grid = np.indices([len(column_choices)] * dim_x).reshape(dim_x, -1).T
        for combo in index_grid:
            kernel = np.stack([column_choices[j] for j in combo], axis=1)
            channels.append(embed_classical_policy(kernel))
            counts["classical"] += 1

    xi_grid = None
    if sources.appending:
        xi_grid = build_state_grid(dim_a, n, xi_seed, radius_samples=0)
        for xi in xi_grid.points:
            channels.append(open_loop_channel(xi, dim_x))
            counts["appending"] += 1

    if sources.closed_loop:
        rng = np.random.default_rng(child_phi)
        for _ in range(2 * n):
            phi = random_phi_family(dim_x, dim_a, dim_x * dim_a, rng)
            channels.append(closed_loop_channel(phi))
            counts["closed_loop"] += 1

    for ch in extra_channels:
        if ch.in_dim != dim_x or ch.out_dim != dim_x * dim_a:
            raise DimensionMismatch("extra channel dimensions do not match the net")
        channels.append(ch)
        counts["extra"] += 1

    from .serialize import channel_key  # deferred: serialize depends on this module

    seen = set()
    unique = []
    for ch in channels:
        key = channel_key(ch)
        if key not in seen:
            seen.add(key)
            unique.append(ch)

    provenance = {
        "kind": "structured_net",
        "dim_x": dim_x,
        "dim_a": dim_a,
        "n": n,
        "seed": int(seed),
        "sources": sources.as_dict(),
        "counts": counts,
        "size": len(unique),
    }
    if xi_grid is not None:
        provenance["xi_grid"] = xi_grid.provenance
    return ChannelNet(channels=tuple(unique), provenance=provenance)


def build_finite_action_qmdp(model, net: ChannelNet) -> QOMDPModel:
    """Restrict a channel-action decision model to a finite net of channels.

    ``model`` is either an :class:`EmbeddedModel` or a raw triple
    ``(transition_channel, cost_observable, beta)``.  The result has one
    action per net channel, a single (deterministic) observation, dynamics
    ``N o gamma_a``, and stage cost ``<c, gamma_a(rho)>`` carried by the
    Heisenberg-picture observables ``gamma_a^+(c)``.
    """
    if isinstance(model, EmbeddedModel):
        transition, cost, beta = model.transition_channel, model.cost, model.beta
    else:
        transition, cost, beta = model
    if len(net) == 0:
        raise InvariantError("channel net must be nonempty")
    dim_x = transition.out_dim
    identity = KrausChannel(dim_x, dim_x, (np.eye(dim_x, dtype=np.complex128),))
    actions, divisible, indivisible, costs = [], [], [], []
    for k, gamma in enumerate(net.channels):
        if gamma.in_dim != dim_x or gamma.out_dim != transition.in_dim:
            raise DimensionMismatch("net channel dims do not match the transition channel")
        actions.append(f"ch{k}")
        divisible.append(identity)
        indivisible.append(compose(transition, gamma))
        costs.append(HermitianObservable(adjoint_apply(gamma, cost.matrix)))
    return QOMDPModel(
        dim=dim_x,
        actions=tuple(actions),
        observations=(0,),
        divisible=tuple(divisible),
        indivisible=tuple(indivisible),
        cost=tuple(costs),
        beta=beta,
    )
