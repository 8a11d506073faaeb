import numpy as np
import pytest

from qmdp.approximation import ChannelNet, StateGrid, build_channel_net, build_state_grid
from qmdp.classical import FiniteMDP, value_iteration
from qmdp.embedding import embed_classical_policy, embed_model
from qmdp.errors import ConvergenceError, InvariantError
from qmdp.policies import MarkovQuantumPolicy, open_loop_channel
from qmdp.quantum import DensityOperator, apply_kraus, expectation
from qmdp.solver import (
    GridValueFunction,
    SolverConfig,
    bellman_apply,
    build_bellman_table,
    default_state_prep_povm,
    measure_prepare_channel,
    rollout,
    state_prep_cost,
    state_prep_demo,
    value_iterate,
)

from helpers import deterministic_kernels, random_kernel, random_mdp


def basis_grid(dim: int) -> StateGrid:
    return StateGrid(
        points=tuple(DensityOperator.basis_state(dim, x) for x in range(dim)),
        resolution=1.0,
        provenance={"kind": "basis"},
        covering_radius_estimate=0.0,
    )


def deterministic_kernel_net(dim_x: int, dim_a: int) -> ChannelNet:
    channels = tuple(embed_classical_policy(k) for k in deterministic_kernels(dim_x, dim_a))
    return ChannelNet(channels=channels, provenance={"kind": "deterministic-kernels"})


class TestBellmanApply:
    def test_zero_cost_zero_values(self):
        mdp = random_mdp(2, 2, 0.9, np.random.default_rng(0))
        em = embed_model(FiniteMDP(p=mdp.p, c=np.zeros((2, 2)), beta=0.9))
        grid = basis_grid(2)
        net = deterministic_kernel_net(2, 2)
        out = bellman_apply(GridValueFunction(grid, np.zeros(2)), net, em.transition_channel, em.cost, 0.9)
        assert np.max(np.abs(out.values)) < 1e-14

    def test_zero_continuation_is_myopic_cost(self):
        rng = np.random.default_rng(1)
        mdp = random_mdp(3, 2, 0.9, rng)
        em = embed_model(mdp)
        grid = basis_grid(3)
        net = deterministic_kernel_net(3, 2)
        out = bellman_apply(GridValueFunction(grid, np.zeros(3)), net, em.transition_channel, em.cost, 0.9)
        assert np.allclose(out.values, mdp.c.min(axis=1), atol=1e-12)

    def test_single_channel_net_is_evaluation(self):
        rng = np.random.default_rng(2)
        mdp = random_mdp(2, 2, 0.9, rng)
        em = embed_model(mdp)
        grid = build_state_grid(2, 1, seed=3)
        gamma = embed_classical_policy(random_kernel(2, 2, rng))
        net = ChannelNet(channels=(gamma,), provenance={"kind": "single"})
        values = rng.random(len(grid))
        out = bellman_apply(GridValueFunction(grid, values), net, em.transition_channel, em.cost, 0.9)
        # oracle: direct evaluation per grid point, no minimization involved
        for i, point in enumerate(grid.points):
            sigma = apply_kraus(gamma.stack, point.matrix)
            stage = expectation(em.cost.matrix, sigma)
            nxt = apply_kraus(em.transition_channel.stack, sigma)
            d2 = [float(np.linalg.norm(nxt - q.matrix)) for q in grid.points]
            expected = stage + 0.9 * values[int(np.argmin(d2))]
            assert abs(out.values[i] - expected) < 1e-12


class TestValueIterate:
    def test_constant_cost_fixed_point(self):
        rng = np.random.default_rng(4)
        mdp = random_mdp(2, 2, 0.9, rng)
        em = embed_model(FiniteMDP(p=mdp.p, c=np.ones((2, 2)), beta=0.9))
        grid = build_state_grid(2, 2, seed=5)
        net = build_channel_net(2, 2, 2, seed=5)
        result = value_iterate(SolverConfig(beta=0.9, eps=1e-8), net, em.transition_channel, em.cost, grid)
        assert np.max(np.abs(result.values.values - 10.0)) < 1e-7

    def test_classical_consistency_on_deterministic_model(self):
        rng = np.random.default_rng(6)
        mdp = random_mdp(3, 2, 0.9, rng, deterministic=True)
        em = embed_model(mdp)
        classical_values, _ = value_iteration(mdp, eps=2.5e-7)
        result = value_iterate(
            SolverConfig(beta=0.9, eps=2.5e-7),
            deterministic_kernel_net(3, 2),
            em.transition_channel,
            em.cost,
            basis_grid(3),
        )
        assert np.max(np.abs(result.values.values - classical_values)) <= 1e-6

    def test_contraction_on_random_value_pairs(self):
        rng = np.random.default_rng(7)
        mdp = random_mdp(2, 2, 0.9, rng)
        em = embed_model(mdp)
        grid = build_state_grid(2, 2, seed=8)
        net = build_channel_net(2, 2, 2, seed=8)
        table = build_bellman_table(grid, net, em.transition_channel, em.cost)
        for _ in range(10):
            v = rng.random(len(grid)) * 10
            w = rng.random(len(grid)) * 10
            lv, _ = table.apply(v, 0.9)
            lw, _ = table.apply(w, 0.9)
            assert np.max(np.abs(lv - lw)) <= 0.9 * np.max(np.abs(v - w)) + 1e-12

    def test_monotonicity(self):
        rng = np.random.default_rng(9)
        mdp = random_mdp(2, 2, 0.9, rng)
        em = embed_model(mdp)
        grid = build_state_grid(2, 2, seed=10)
        net = build_channel_net(2, 2, 2, seed=10)
        table = build_bellman_table(grid, net, em.transition_channel, em.cost)
        v = rng.random(len(grid))
        w = v + rng.random(len(grid))
        lv, _ = table.apply(v, 0.9)
        lw, _ = table.apply(w, 0.9)
        assert np.all(lv <= lw + 1e-12)

    def test_residuals_decay_geometrically(self):
        rng = np.random.default_rng(11)
        mdp = random_mdp(2, 2, 0.9, rng)
        em = embed_model(mdp)
        grid = build_state_grid(2, 2, seed=12)
        net = build_channel_net(2, 2, 2, seed=12)
        result = value_iterate(SolverConfig(beta=0.9, eps=1e-6), net, em.transition_channel, em.cost, grid)
        res = result.residuals
        for k in range(3, len(res) - 1):
            if res[k] == 0.0:
                break
            assert res[k + 1] / res[k] <= 0.9 + 1e-6

    def test_larger_net_never_increases_values(self):
        rng = np.random.default_rng(13)
        mdp = random_mdp(3, 2, 0.9, rng)
        em = embed_model(mdp)
        grid = build_state_grid(3, 2, seed=14)
        config = SolverConfig(beta=0.9, eps=1e-10)
        small = build_channel_net(3, 2, 1, seed=14)
        large = build_channel_net(3, 2, 2, seed=14)
        v_small = value_iterate(config, small, em.transition_channel, em.cost, grid).values.values
        v_large = value_iterate(config, large, em.transition_channel, em.cost, grid).values.values
        assert np.all(v_large <= v_small + 1e-9)

    def test_nonconvergence_raises_with_residual(self):
        rng = np.random.default_rng(15)
        mdp = random_mdp(2, 2, 0.9, rng)
        em = embed_model(mdp)
        grid = basis_grid(2)
        net = deterministic_kernel_net(2, 2)
        with pytest.raises(ConvergenceError) as err:
            value_iterate(SolverConfig(beta=0.9, eps=1e-9, max_iters=2), net, em.transition_channel, em.cost, grid)
        assert err.value.residual is not None and err.value.residual > 0


class TestRollout:
    def test_zero_cost(self):
        rng = np.random.default_rng(16)
        mdp = random_mdp(2, 2, 0.9, rng)
        em = embed_model(FiniteMDP(p=mdp.p, c=np.zeros((2, 2)), beta=0.9))
        policy = MarkovQuantumPolicy(tail=embed_classical_policy(random_kernel(2, 2, rng)))
        result = rollout(policy, em.transition_channel, em.cost, DensityOperator.basis_state(2, 0), 0.9, 30)
        assert result.value == 0.0

    def test_open_loop_matches_classical_recursion(self):
        from qmdp.classical import dmdp_rollout

        rng = np.random.default_rng(17)
        mdp = random_mdp(3, 2, 0.9, rng)
        em = embed_model(mdp)
        weights = np.array([0.25, 0.75])
        xi = DensityOperator.diagonal(weights)
        policy = MarkovQuantumPolicy(tail=open_loop_channel(xi, dim_x=3), tag="open_loop")
        horizon = 60
        got = rollout(policy, em.transition_channel, em.cost, DensityOperator.basis_state(3, 1), 0.9, horizon)
        # classical oracle: the state-independent kernel with the same weights
        kernel = np.tile(weights[:, None], (1, 3))
        mu0 = np.array([0.0, 1.0, 0.0])
        _, _, costs = dmdp_rollout(mdp, [kernel], mu0, horizon)
        expected = float(sum(0.9**t * c for t, c in enumerate(costs)))
        assert abs(got.value - expected) < 1e-10

    def test_greedy_rollout_consistent_with_grid_values(self):
        rng = np.random.default_rng(18)
        mdp = random_mdp(3, 2, 0.9, rng, deterministic=True)
        em = embed_model(mdp)
        grid = basis_grid(3)
        net = deterministic_kernel_net(3, 2)
        eps = 1e-8
        result = value_iterate(SolverConfig(beta=0.9, eps=eps), net, em.transition_channel, em.cost, grid)
        horizon = 400
        got = rollout(result.policy, em.transition_channel, em.cost, grid.points[0], 0.9, horizon)
        assert got.value <= result.values.values[0] + eps + got.truncation_bound + 1e-9

    def test_finite_horizon_criterion(self):
        rng = np.random.default_rng(19)
        mdp = random_mdp(2, 2, 0.9, rng)
        em = embed_model(mdp)
        policy = MarkovQuantumPolicy(tail=embed_classical_policy(random_kernel(2, 2, rng)))
        result = rollout(
            policy, em.transition_channel, em.cost, DensityOperator.basis_state(2, 0), 0.9, 5,
            criterion="finite_horizon",
        )
        assert abs(result.value - sum(result.stage_costs)) < 1e-12
        assert result.truncation_bound == 0.0


class TestStatePrep:
    def test_invalid_povm_rejected(self):
        bad = [np.eye(4), np.eye(4)]  # sums to 2*Id
        with pytest.raises(InvariantError):
            measure_prepare_channel(bad, dim_x=2)

    def test_default_povm_builds_quantum_to_classical_channel(self):
        from qmdp.quantum import random_density

        channel = measure_prepare_channel(default_state_prep_povm(2, 2), dim_x=2)
        rng = np.random.default_rng(20)
        sigma = random_density(4, rng)
        out = apply_kraus(channel.stack, sigma.matrix)
        # output is classical: diagonal with the coarse-grained pair weights
        diag = np.diag(out).real
        want = np.array([sigma.matrix[0, 0] + sigma.matrix[1, 1], sigma.matrix[2, 2] + sigma.matrix[3, 3]]).real
        assert np.max(np.abs(out - np.diag(diag))) < 1e-12
        assert np.allclose(diag, want)

    def test_demo_costs_bounded_and_beats_appending_baseline(self):
        config = SolverConfig(beta=0.9, eps=1e-6, horizon_for_rollout=150)
        report = state_prep_demo(2, 2, np.array([1.0, 0.0]), config, n=2, seed=21)
        costs = np.array(report.rollout_result.stage_costs)
        assert np.all(costs >= -1e-12) and np.all(costs <= 1.0 + 1e-12)
        assert report.rollout_result.value <= report.baseline_value + 1e-6

    def test_target_equal_to_initial_state_costs_nothing_first(self):
        config = SolverConfig(beta=0.9, eps=1e-6, horizon_for_rollout=50)
        report = state_prep_demo(
            2, 2, np.array([1.0, 0.0]), config, n=1, seed=22,
            rho0=DensityOperator.basis_state(2, 0),
        )
        assert report.rollout_result.stage_costs[0] <= 1e-9

    def test_cost_observable_spectrum(self):
        cost = state_prep_cost(np.array([0.0, 1.0]), 2, 2)
        eigs = np.linalg.eigvalsh(cost.matrix)
        assert eigs.min() >= -1e-12 and eigs.max() <= 1.0 + 1e-12
