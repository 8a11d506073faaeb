"""Shared generators and independent oracles for the test suite.

Oracles here intentionally use plain Python loops rather than the library's
vectorized paths, so they stay independent of the code they check.
"""

import numpy as np

from qmdp.classical import FiniteMDP
from qmdp.quantum import KrausChannel


def random_mdp(n_states, n_actions, beta, rng, deterministic=False) -> FiniteMDP:
    if deterministic:
        p = np.zeros((n_states, n_states, n_actions))
        for x in range(n_states):
            for a in range(n_actions):
                p[rng.integers(n_states), x, a] = 1.0
    else:
        p = rng.random((n_states, n_states, n_actions))
        p /= p.sum(axis=0, keepdims=True)
    return FiniteMDP(p=p, c=rng.random((n_states, n_actions)), beta=beta)


def random_kernel(n_states, n_actions, rng) -> np.ndarray:
    k = rng.random((n_actions, n_states))
    return k / k.sum(axis=0, keepdims=True)


def random_distribution(n, rng) -> np.ndarray:
    w = rng.random(n)
    return w / w.sum()


def random_pure_vector(dim, rng) -> np.ndarray:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_cptp_channel(in_dim, out_dim, n_kraus, rng) -> KrausChannel:
    """Random channel from a QR-orthonormalized Stinespring isometry."""
    g = rng.standard_normal((out_dim * n_kraus, in_dim)) + 1j * rng.standard_normal(
        (out_dim * n_kraus, in_dim)
    )
    q, _ = np.linalg.qr(g)
    kraus = tuple(q[l * out_dim : (l + 1) * out_dim, :] for l in range(n_kraus))
    return KrausChannel(in_dim, out_dim, kraus)


def backward_induction(mdp: FiniteMDP, horizon: int) -> np.ndarray:
    """Finite-horizon optimal values by explicit loops (oracle)."""
    v = [0.0] * mdp.n_states
    for _ in range(horizon):
        new_v = []
        for x in range(mdp.n_states):
            best = None
            for a in range(mdp.n_actions):
                total = mdp.c[x, a]
                for y in range(mdp.n_states):
                    total += mdp.beta * mdp.p[y, x, a] * v[y]
                if best is None or total < best:
                    best = total
            new_v.append(best)
        v = new_v
    return np.array(v)


def lifted_transition_oracle(mdp: FiniteMDP, nu) -> np.ndarray:
    """Explicit double-sum version of the lifted transition map (oracle)."""
    out = np.zeros(mdp.n_states)
    for y in range(mdp.n_states):
        for x in range(mdp.n_states):
            for a in range(mdp.n_actions):
                out[y] += mdp.p[y, x, a] * nu[x, a]
    return out


def closed_loop_action_oracle(phi_vectors: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Explicit double-sum action of a phi-family channel on |psi><psi| (oracle).

    Returns sum_{x,y} <x,psi><psi,y> |x><y| (x) sum_{a,b} <phi_{y,b},phi_{x,a}> |a><b|.
    """
    dim_x, dim_a, _ = phi_vectors.shape
    out = np.zeros((dim_x * dim_a, dim_x * dim_a), dtype=complex)
    for x in range(dim_x):
        for y in range(dim_x):
            coeff = psi[x] * np.conj(psi[y])
            for a in range(dim_a):
                for b in range(dim_a):
                    overlap = np.vdot(phi_vectors[y, b], phi_vectors[x, a])
                    out[x * dim_a + a, y * dim_a + b] += coeff * overlap
    return out


def deterministic_kernels(n_states, n_actions):
    """Every deterministic kernel, as (n_actions, n_states) arrays."""
    kernels = []
    for code in range(n_actions**n_states):
        k = np.zeros((n_actions, n_states))
        rest = code
        for x in range(n_states):
            k[rest % n_actions, x] = 1.0
            rest //= n_actions
        kernels.append(k)
    return kernels
