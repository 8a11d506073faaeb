"""Policy channels ``H_X -> H_X (x) H_A`` and their structural hierarchy.

Four nested classes are handled:

* ``classical`` -- embeddings of stochastic kernels (basis-diagonal action);
* ``open_loop`` -- appending channels ``rho -> rho (x) xi``, the channels
  whose action is undone by the partial trace on every state;
* ``closed_loop`` -- channels that preserve every classical basis state
  under the partial trace (classical-state-preserving), characterized by
  families of vectors ``phi_{x,a}`` with ``sum_a <phi_{x,a}, phi_{x,a}> = 1``;
* ``general`` -- everything else.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .embedding import embed_classical_policy
from .errors import DimensionMismatch, InvariantError
from .quantum import (
    DensityOperator,
    KrausChannel,
    _checked,
    apply_kraus,
    ptrace_matrix,
)

__all__ = [
    "PhiFamily",
    "MarkovQuantumPolicy",
    "ReversibilityCheck",
    "classical_basis_set",
    "open_loop_channel",
    "closed_loop_channel",
    "random_phi_family",
    "check_full_reversibility",
    "check_classical_reversibility",
    "classify_policy",
    "CLASSIFY_SEED",
    "N_CLASSIFY_STATES",
]

# Seeded probe states used by classify_policy, fixed for reproducibility.
CLASSIFY_SEED = 20260811
N_CLASSIFY_STATES = 20

_REV_TOL = 1e-9
_CLASSIFY_TOL = 1e-9


@dataclass(frozen=True)
class PhiFamily:
    """Vectors ``phi_{x,a}`` in an auxiliary space of dimension ``dim_l``.

    The per-state normalization ``sum_a ||phi_{x,a}||^2 = 1`` makes the
    associated lift ``|x> -> sum_a |x,a> (x) |phi_{x,a}>`` an isometry.
    """

    vectors: np.ndarray  # shape (dim_x, dim_a, dim_l)

    def __post_init__(self):
        arr = np.array(self.vectors, dtype=np.complex128, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "vectors", arr)
        if arr.ndim != 3:
            raise InvariantError("phi family must have shape (dim_x, dim_a, dim_l)")
        dim_x, dim_a, dim_l = arr.shape
        if dim_l > dim_x * dim_x * dim_a:
            raise InvariantError(
                f"auxiliary dimension {dim_l} exceeds the bound {dim_x * dim_x * dim_a}"
            )
        norms = np.sum(np.abs(arr) ** 2, axis=(1, 2))
        worst = float(np.max(np.abs(norms - 1.0)))
        if worst > 1e-9:
            raise InvariantError(f"per-state normalization off by {worst:.3e}")

    @property
    def dim_x(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim_a(self) -> int:
        return self.vectors.shape[1]

    @property
    def dim_l(self) -> int:
        return self.vectors.shape[2]


@dataclass(frozen=True)
class MarkovQuantumPolicy:
    """A time-indexed policy: a finite prefix of channels plus a stationary tail."""

    tail: KrausChannel
    steps: tuple = ()
    tag: str = "general"

    def __post_init__(self):
        channels = tuple(self.steps) + (self.tail,)
        dims = {(ch.in_dim, ch.out_dim) for ch in channels}
        if len(dims) != 1:
            raise InvariantError("all channels in a policy must share dimensions")
        if self.tag not in ("general", "classical", "open_loop", "closed_loop"):
            raise InvariantError(f"unknown structural tag {self.tag!r}")
        object.__setattr__(self, "steps", tuple(self.steps))

    @property
    def stationary(self) -> bool:
        return not self.steps

    def channel_at(self, t: int) -> KrausChannel:
        return self.steps[t] if t < len(self.steps) else self.tail


def classical_basis_set(dim_x: int) -> tuple:
    """The classical states ``{|x><x| : x}`` in the fixed basis; the set on
    which closed-loop reversibility is required."""
    if dim_x <= 0:
        raise InvariantError("dim_x must be positive")
    return tuple(DensityOperator.basis_state(dim_x, x) for x in range(dim_x))


def open_loop_channel(xi: DensityOperator, dim_x: int) -> KrausChannel:
    """Appending channel ``rho -> rho (x) xi`` on a state space of dimension
    ``dim_x``; Kraus operators ``sqrt(lambda_k) (Id (x) |e_k>)`` from the
    spectral decomposition of ``xi``."""
    if dim_x <= 0:
        raise InvariantError("dim_x must be positive")
    evals, evecs = np.linalg.eigh(xi.matrix)
    eye = np.eye(dim_x, dtype=np.complex128)
    ops = []
    for k in range(evals.size):
        lam = float(evals[k])
        if lam <= 1e-15:
            continue
        column = evecs[:, k].reshape(-1, 1)
        ops.append(np.sqrt(lam) * np.kron(eye, column))
    if not ops:
        raise InvariantError("appending state has no positive spectrum")
    return _checked(KrausChannel(dim_x, dim_x * xi.dim, tuple(ops)))


def closed_loop_channel(phi: PhiFamily) -> KrausChannel:
    """Classical-state-preserving channel built from a phi family.

    The Kraus operators are the auxiliary-basis slices of the isometry
    ``V |x> = sum_a |x,a> (x) |phi_{x,a}>``, i.e.
    ``K_l |x> = sum_a phi_{x,a}[l] |x,a>`` for ``l = 0..dim_l-1``.
    """
    dim_x, dim_a, dim_l = phi.dim_x, phi.dim_a, phi.dim_l
    ops = []
    for l in range(dim_l):
        k = np.zeros((dim_x * dim_a, dim_x), dtype=np.complex128)
        for x in range(dim_x):
            k[x * dim_a : (x + 1) * dim_a, x] = phi.vectors[x, :, l]
        if np.any(k):
            ops.append(k)
    if not ops:
        raise InvariantError("phi family produced an empty Kraus list")
    return _checked(KrausChannel(dim_x, dim_x * dim_a, tuple(ops)))


def random_phi_family(dim_x: int, dim_a: int, dim_l: int, rng: np.random.Generator) -> PhiFamily:
    """Complex-Gaussian phi family, normalized per state."""
    arr = rng.standard_normal((dim_x, dim_a, dim_l)) + 1j * rng.standard_normal(
        (dim_x, dim_a, dim_l)
    )
    norms = np.sqrt(np.sum(np.abs(arr) ** 2, axis=(1, 2)))
    return PhiFamily(arr / norms[:, None, None])


class ReversibilityCheck(NamedTuple):
    passed: bool
    residual: float


def _policy_dims(gamma: KrausChannel) -> tuple[int, int]:
    dim_x = gamma.in_dim
    if gamma.out_dim % dim_x != 0:
        raise DimensionMismatch(
            f"output dim {gamma.out_dim} is not a multiple of input dim {dim_x}"
        )
    return dim_x, gamma.out_dim // dim_x


def check_full_reversibility(gamma: KrausChannel, tol: float = _REV_TOL) -> ReversibilityCheck:
    """Does the partial trace undo ``gamma`` on every state?

    Checked on the spanning set of matrix units, which suffices because
    both maps are linear; by the structure theorem for appending channels,
    passing is equivalent to ``gamma(rho) = rho (x) xi`` for a fixed xi.
    """
    dim_x, dim_a = _policy_dims(gamma)
    worst = 0.0
    unit = np.zeros((dim_x, dim_x), dtype=np.complex128)
    for i in range(dim_x):
        for j in range(dim_x):
            unit[i, j] = 1.0
            image = apply_kraus(gamma.stack, unit, renormalize=False)
            reduced = ptrace_matrix(image, dim_x, dim_a, keep_first=True)
            worst = max(worst, float(np.max(np.abs(reduced - unit))))
            unit[i, j] = 0.0
    return ReversibilityCheck(worst <= tol, worst)


def check_classical_reversibility(gamma: KrausChannel, tol: float = _REV_TOL) -> ReversibilityCheck:
    """Does the partial trace undo ``gamma`` on every classical basis state?"""
    dim_x, dim_a = _policy_dims(gamma)
    worst = 0.0
    for state in classical_basis_set(dim_x):
        image = apply_kraus(gamma.stack, state.matrix, renormalize=False)
        reduced = ptrace_matrix(image, dim_x, dim_a, keep_first=True)
        worst = max(worst, float(np.max(np.abs(reduced - state.matrix))))
    return ReversibilityCheck(worst <= tol, worst)


def _probe_states(dim_x: int) -> np.ndarray:
    rng = np.random.default_rng(CLASSIFY_SEED)
    vecs = rng.standard_normal((N_CLASSIFY_STATES, dim_x)) + 1j * rng.standard_normal(
        (N_CLASSIFY_STATES, dim_x)
    )
    vecs /= np.linalg.norm(vecs, axis=1)[:, None]
    return vecs


def _actions_match(gamma: KrausChannel, reference, dim_x: int, tol: float) -> bool:
    """Compare two channel actions on matrix units and on seeded pure probes."""
    unit = np.zeros((dim_x, dim_x), dtype=np.complex128)
    for i in range(dim_x):
        for j in range(dim_x):
            unit[i, j] = 1.0
            got = apply_kraus(gamma.stack, unit, renormalize=False)
            want = reference(unit)
            unit[i, j] = 0.0
            if float(np.max(np.abs(got - want))) > tol:
                return False
    for vec in _probe_states(dim_x):
        rho = np.outer(vec, vec.conj())
        got = apply_kraus(gamma.stack, rho, renormalize=False)
        if float(np.max(np.abs(got - reference(rho)))) > tol:
            return False
    return True


def classify_policy(gamma: KrausChannel, tol: float = _CLASSIFY_TOL) -> str:
    """Return the most specific structural tag for a policy channel.

    ``classical`` if the action coincides with the embedding of the kernel
    extracted from its basis-state behaviour, ``open_loop`` if the action is
    appending with the factor read off ``Tr_X(gamma(Id/dim_x))``,
    ``closed_loop`` if classical reversibility holds, else ``general``.
    """
    dim_x, dim_a = _policy_dims(gamma)

    # candidate kernel pi(a|x) = <x,a| gamma(|x><x|) |x,a>
    kernel = np.zeros((dim_a, dim_x))
    unit = np.zeros((dim_x, dim_x), dtype=np.complex128)
    for x in range(dim_x):
        unit[x, x] = 1.0
        image = apply_kraus(gamma.stack, unit, renormalize=False)
        unit[x, x] = 0.0
        for a in range(dim_a):
            kernel[a, x] = image[x * dim_a + a, x * dim_a + a].real
    kernel = np.clip(kernel, 0.0, None)
    if np.max(np.abs(kernel.sum(axis=0) - 1.0)) <= 1e-6:
        rebuilt = embed_classical_policy(kernel / kernel.sum(axis=0))
        if _actions_match(
            gamma, lambda m: apply_kraus(rebuilt.stack, m, renormalize=False), dim_x, tol
        ):
            return "classical"

    mixed = np.eye(dim_x, dtype=np.complex128) / dim_x
    xi = ptrace_matrix(apply_kraus(gamma.stack, mixed, renormalize=False), dim_x, dim_a, keep_first=False)
    if _actions_match(gamma, lambda m: np.kron(m, xi), dim_x, tol):
        return "open_loop"

    if check_classical_reversibility(gamma, tol).passed:
        return "closed_loop"
    return "general"
