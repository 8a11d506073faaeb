"""Density operators, Kraus channels, and the complex linear algebra they share.

Conventions used throughout the package:

* every matrix is a dense complex128 numpy array;
* composite systems use Kronecker (row-major) index order, so the basis
  vector ``|x, a>`` of ``H_X (x) H_A`` sits at flat index ``x * dim_a + a``;
* norms are Frobenius (Hilbert-Schmidt) unless stated otherwise;
* all public types are immutable after construction and all operations are
  pure functions, so everything here is safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np

from .errors import DimensionMismatch, InvariantError

__all__ = [
    "Tolerances",
    "DEFAULT_TOLERANCES",
    "DensityOperator",
    "KrausChannel",
    "HermitianObservable",
    "ChannelReport",
    "tensor_product",
    "ptrace_matrix",
    "partial_trace",
    "partial_trace_channel",
    "apply_kraus",
    "apply_channel",
    "adjoint_apply",
    "compose",
    "choi_of_map",
    "choi_matrix",
    "validate_channel",
    "hs_inner",
    "expectation",
    "fidelity_pure",
    "hs_distance",
    "unitary_channel",
    "haar_unitary",
    "random_density",
]

# Channel outputs are re-symmetrized and trace-renormalized to suppress
# float drift in iterative solvers; a larger correction means the channel
# itself is broken, so we refuse it.
_RENORM_LIMIT = 1e-6


@dataclass(frozen=True)
class Tolerances:
    """Numerical slack used when checking operator invariants."""

    hermitian_tol: float = 1e-9
    trace_tol: float = 1e-9
    psd_tol: float = 1e-9
    tp_tol: float = 1e-9

    def __post_init__(self):
        for name in ("hermitian_tol", "trace_tol", "psd_tol", "tp_tol"):
            if getattr(self, name) < 0:
                raise InvariantError(f"{name} must be nonnegative")


DEFAULT_TOLERANCES = Tolerances()


def _as_complex(matrix) -> np.ndarray:
    out = np.array(matrix, dtype=np.complex128, copy=True, order="C")
    out.setflags(write=False)
    return out


def _hermiticity_defect(mat: np.ndarray) -> float:
    return float(np.max(np.abs(mat - mat.conj().T))) if mat.size else 0.0


@dataclass(frozen=True)
class DensityOperator:
    """A positive semi-definite, unit-trace operator: the state of a system.

    Construction validates hermiticity, unit trace, and positive
    semi-definiteness at the default tolerances and freezes the matrix.
    """

    matrix: np.ndarray

    def __post_init__(self):
        mat = _as_complex(self.matrix)
        object.__setattr__(self, "matrix", mat)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] == 0:
            raise InvariantError("density operator must be a square matrix")
        tol = DEFAULT_TOLERANCES
        defect = _hermiticity_defect(mat)
        if defect > tol.hermitian_tol:
            raise InvariantError(f"density operator not Hermitian (defect {defect:.3e})")
        tr = complex(np.trace(mat))
        if abs(tr - 1.0) > tol.trace_tol:
            raise InvariantError(f"density operator trace {tr} is not 1")
        min_eig = float(np.linalg.eigvalsh((mat + mat.conj().T) / 2.0).min())
        if min_eig < -tol.psd_tol:
            raise InvariantError(f"density operator has eigenvalue {min_eig:.3e} < 0")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @staticmethod
    def pure(vector) -> "DensityOperator":
        """Rank-one state |v><v| from a unit vector."""
        v = np.asarray(vector, dtype=np.complex128).reshape(-1)
        norm = float(np.linalg.norm(v))
        if abs(norm - 1.0) > 1e-9:
            raise InvariantError(f"state vector norm {norm} is not 1")
        return DensityOperator(np.outer(v, v.conj()))

    @staticmethod
    def basis_state(dim: int, index: int) -> "DensityOperator":
        mat = np.zeros((dim, dim), dtype=np.complex128)
        mat[index, index] = 1.0
        return DensityOperator(mat)

    @staticmethod
    def maximally_mixed(dim: int) -> "DensityOperator":
        return DensityOperator(np.eye(dim, dtype=np.complex128) / dim)

    @staticmethod
    def diagonal(weights) -> "DensityOperator":
        return DensityOperator(np.diag(np.asarray(weights, dtype=np.complex128)))


@dataclass(frozen=True)
class HermitianObservable:
    """A Hermitian operator; the carrier of one-stage costs c with <c, sigma>."""

    matrix: np.ndarray

    def __post_init__(self):
        mat = _as_complex(self.matrix)
        object.__setattr__(self, "matrix", mat)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise InvariantError("observable must be a square matrix")
        defect = _hermiticity_defect(mat)
        if defect > DEFAULT_TOLERANCES.hermitian_tol:
            raise InvariantError(f"observable not Hermitian (defect {defect:.3e})")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def operator_norm(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvalsh(self.matrix))))


@dataclass(frozen=True)
class KrausChannel:
    """A channel ``rho -> sum_l K_l rho K_l^+`` given by its Kraus operators.

    The dataclass itself only checks shapes, so invalid Kraus lists (e.g. a
    non-trace-preserving family used as a negative control) can be
    represented for validation and testing.  Every channel-building
    function in this package refuses such lists; use :func:`validate_channel`
    to audit a channel of unknown provenance.
    """

    in_dim: int
    out_dim: int
    kraus: tuple = ()

    def __post_init__(self):
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise InvariantError("channel dimensions must be positive")
        ops = tuple(_as_complex(k) for k in self.kraus)
        if not ops:
            raise InvariantError("channel needs at least one Kraus operator")
        for k in ops:
            if k.shape != (self.out_dim, self.in_dim):
                raise DimensionMismatch(
                    f"Kraus operator shape {k.shape} != ({self.out_dim}, {self.in_dim})"
                )
        object.__setattr__(self, "kraus", ops)

    @cached_property
    def stack(self) -> np.ndarray:
        """All Kraus operators as one (n_kraus, out_dim, in_dim) array."""
        arr = np.stack(self.kraus)
        arr.setflags(write=False)
        return arr

    def completeness_residual(self) -> float:
        gram = np.einsum("lij,lik->jk", self.stack.conj(), self.stack)
        return float(np.linalg.norm(gram - np.eye(self.in_dim)))


class ChannelReport(NamedTuple):
    """Outcome of a CPTP audit: residuals plus pass/fail verdicts."""

    completeness_residual: float
    choi_min_eigenvalue: float
    trace_preserving: bool
    completely_positive: bool
    passed: bool

    def as_dict(self) -> dict:
        return {
            "completeness_residual": self.completeness_residual,
            "choi_min_eigenvalue": self.choi_min_eigenvalue,
            "trace_preserving": self.trace_preserving,
            "completely_positive": self.completely_positive,
            "passed": self.passed,
        }


def _checked(ch: KrausChannel, tol: Tolerances = DEFAULT_TOLERANCES) -> KrausChannel:
    """Gate used by all channel constructors: refuse non-trace-preserving lists."""
    residual = ch.completeness_residual()
    if residual > tol.tp_tol:
        raise InvariantError(f"channel is not trace preserving (residual {residual:.3e})")
    return ch


def tensor_product(a, b) -> np.ndarray:
    """Kronecker product of two matrices (or vectors)."""
    return np.kron(np.asarray(a, dtype=np.complex128), np.asarray(b, dtype=np.complex128))


def ptrace_matrix(mat: np.ndarray, dim_first: int, dim_second: int, keep_first: bool) -> np.ndarray:
    """Partial trace of a raw matrix on a bipartite space of shape (d1*d2, d1*d2)."""
    mat = np.asarray(mat)
    if mat.shape != (dim_first * dim_second, dim_first * dim_second):
        raise DimensionMismatch(
            f"matrix shape {mat.shape} incompatible with factors {dim_first}x{dim_second}"
        )
    tensor = mat.reshape(dim_first, dim_second, dim_first, dim_second)
    if keep_first:
        return np.trace(tensor, axis1=1, axis2=3)
    return np.trace(tensor, axis1=0, axis2=2)


def partial_trace(
    sigma: DensityOperator, dim_keep: int, dim_out: int, side: str = "trace_second"
) -> DensityOperator:
    """Trace out one tensor factor of a bipartite state.

    ``side="trace_second"`` expects ``sigma`` on ``H_keep (x) H_out`` and
    discards the second factor; ``side="trace_first"`` expects
    ``H_out (x) H_keep`` and discards the first.
    """
    if sigma.dim != dim_keep * dim_out:
        raise DimensionMismatch(
            f"state dim {sigma.dim} != dim_keep*dim_out = {dim_keep * dim_out}"
        )
    if side == "trace_second":
        reduced = ptrace_matrix(sigma.matrix, dim_keep, dim_out, keep_first=True)
    elif side == "trace_first":
        reduced = ptrace_matrix(sigma.matrix, dim_out, dim_keep, keep_first=False)
    else:
        raise InvariantError(f"unknown side {side!r}")
    return DensityOperator(reduced)


def partial_trace_channel(dim_keep: int, dim_out: int, side: str = "trace_second") -> KrausChannel:
    """The partial trace as a channel, with Kraus operators ``Id (x) <a|``."""
    ops = []
    for a in range(dim_out):
        bra = np.zeros((1, dim_out), dtype=np.complex128)
        bra[0, a] = 1.0
        if side == "trace_second":
            ops.append(np.kron(np.eye(dim_keep, dtype=np.complex128), bra))
        elif side == "trace_first":
            ops.append(np.kron(bra, np.eye(dim_keep, dtype=np.complex128)))
        else:
            raise InvariantError(f"unknown side {side!r}")
    return _checked(KrausChannel(dim_keep * dim_out, dim_keep, tuple(ops)))


def apply_kraus(stack: np.ndarray, mat: np.ndarray, renormalize: bool = True) -> np.ndarray:
    """Raw Kraus action ``sum_l K_l mat K_l^+`` on an arbitrary matrix.

    With ``renormalize=True`` the result is re-symmetrized and scaled back
    to the input trace, the float-drift hygiene applied after every channel
    application in this package.
    """
    out = np.einsum("lij,jk,lmk->im", stack, mat, stack.conj())
    if renormalize:
        out = (out + out.conj().T) / 2.0
        tr_in = np.trace(mat).real
        tr_out = np.trace(out).real
        if abs(tr_in) > 1e-12:
            drift = abs(tr_out - tr_in)
            if drift > _RENORM_LIMIT * max(1.0, abs(tr_in)):
                raise InvariantError(
                    f"channel application drifted trace by {drift:.3e}; channel is not CPTP"
                )
            out = out * (tr_in / tr_out)
    return out


def apply_channel(ch: KrausChannel, rho: DensityOperator) -> DensityOperator:
    """Apply a channel to a state; the output is validated as a state."""
    if rho.dim != ch.in_dim:
        raise DimensionMismatch(f"state dim {rho.dim} != channel input dim {ch.in_dim}")
    return DensityOperator(apply_kraus(ch.stack, rho.matrix))


def adjoint_apply(ch: KrausChannel, obs: np.ndarray) -> np.ndarray:
    """Heisenberg-picture action ``sum_l K_l^+ obs K_l`` on an observable."""
    obs = np.asarray(obs, dtype=np.complex128)
    if obs.shape != (ch.out_dim, ch.out_dim):
        raise DimensionMismatch(f"observable shape {obs.shape} != channel output dim")
    out = np.einsum("lji,jk,lkm->im", ch.stack.conj(), obs, ch.stack)
    return (out + out.conj().T) / 2.0


def compose(outer: KrausChannel, inner: KrausChannel) -> KrausChannel:
    """Channel composition ``outer o inner`` with Kraus set {K_o K_i}.

    Exactly-zero products are dropped; they contribute nothing to the action
    and commonly arise when composing embedded classical channels.
    """
    if inner.out_dim != outer.in_dim:
        raise DimensionMismatch(
            f"inner output dim {inner.out_dim} != outer input dim {outer.in_dim}"
        )
    ops = []
    for ko in outer.kraus:
        for ki in inner.kraus:
            prod = ko @ ki
            if np.any(prod):
                ops.append(prod)
    if not ops:
        raise InvariantError("composition produced an empty Kraus list")
    return _checked(KrausChannel(inner.in_dim, outer.out_dim, tuple(ops)))


def choi_of_map(apply_fn: Callable[[np.ndarray], np.ndarray], in_dim: int, out_dim: int) -> np.ndarray:
    """Choi matrix ``sum_ij |i><j| (x) N(|i><j|)`` of an arbitrary linear map.

    Accepts a plain action function so that non-completely-positive maps
    (which admit no Kraus form) can be audited in tests.
    """
    choi = np.zeros((in_dim * out_dim, in_dim * out_dim), dtype=np.complex128)
    unit = np.zeros((in_dim, in_dim), dtype=np.complex128)
    for i in range(in_dim):
        for j in range(in_dim):
            unit[i, j] = 1.0
            block = apply_fn(unit.copy())
            choi[i * out_dim : (i + 1) * out_dim, j * out_dim : (j + 1) * out_dim] = block
            unit[i, j] = 0.0
    return choi


def choi_matrix(ch: KrausChannel) -> np.ndarray:
    """Choi matrix of a channel; positive semi-definite iff the map is CP."""
    # sum_l vec(K_l) vec(K_l)^+ with vec(K)[i*out + k] = K[k, i]
    vecs = ch.stack.transpose(0, 2, 1).reshape(len(ch.kraus), -1)
    return np.einsum("li,lj->ij", vecs, vecs.conj())


def validate_channel(ch: KrausChannel, tol: Tolerances = DEFAULT_TOLERANCES) -> ChannelReport:
    """Audit trace preservation and complete positivity of a Kraus family."""
    residual = ch.completeness_residual()
    choi = choi_matrix(ch)
    min_eig = float(np.linalg.eigvalsh((choi + choi.conj().T) / 2.0).min())
    tp_ok = residual <= tol.tp_tol
    cp_ok = min_eig >= -tol.psd_tol
    return ChannelReport(residual, min_eig, tp_ok, cp_ok, tp_ok and cp_ok)


def density_report(matrix, tol: Tolerances = DEFAULT_TOLERANCES) -> dict:
    """Audit a raw matrix against the density-operator invariants."""
    mat = np.asarray(matrix, dtype=np.complex128)
    defect = _hermiticity_defect(mat)
    trace_dev = abs(complex(np.trace(mat)) - 1.0)
    min_eig = float(np.linalg.eigvalsh((mat + mat.conj().T) / 2.0).min())
    passed = (
        defect <= tol.hermitian_tol
        and trace_dev <= tol.trace_tol
        and min_eig >= -tol.psd_tol
    )
    return {
        "hermiticity_defect": defect,
        "trace_deviation": float(trace_dev),
        "min_eigenvalue": min_eig,
        "passed": bool(passed),
    }


def expectation(obs_matrix: np.ndarray, state_matrix: np.ndarray) -> float:
    """Fast ``Re Tr(c sigma)`` on raw matrices (no imaginary-part audit)."""
    return float(np.einsum("ij,ji->", obs_matrix, state_matrix).real)


def hs_inner(a: HermitianObservable, sigma: DensityOperator) -> float:
    """Hilbert-Schmidt pairing ``Tr(a sigma)``; raises if a residual imaginary
    part betrays a non-Hermitian input."""
    if a.dim != sigma.dim:
        raise DimensionMismatch(f"observable dim {a.dim} != state dim {sigma.dim}")
    value = complex(np.einsum("ij,ji->", a.matrix, sigma.matrix))
    if abs(value.imag) > 1e-12:
        raise InvariantError(f"inner product has imaginary residue {value.imag:.3e}")
    return float(value.real)


def fidelity_pure(rho: DensityOperator, psi) -> float:
    """Overlap ``<psi| rho |psi>`` with a pure target, clamped to [0, 1]."""
    v = np.asarray(psi, dtype=np.complex128).reshape(-1)
    norm = float(np.linalg.norm(v))
    if abs(norm - 1.0) > 1e-9:
        raise InvariantError(f"target vector norm {norm} is not 1")
    if v.size != rho.dim:
        raise DimensionMismatch(f"target length {v.size} != state dim {rho.dim}")
    value = complex(v.conj() @ rho.matrix @ v)
    if value.real > 1.0 + 1e-9 or value.real < -1e-9:
        raise InvariantError(f"fidelity {value.real} outside [0, 1] beyond tolerance")
    return float(min(1.0, max(0.0, value.real)))


def hs_distance(a: DensityOperator, b: DensityOperator) -> float:
    """Frobenius (Hilbert-Schmidt) distance between two states."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"state dims {a.dim} != {b.dim}")
    return float(np.linalg.norm(a.matrix - b.matrix))


def unitary_channel(u) -> KrausChannel:
    """Single-Kraus channel ``rho -> U rho U^+`` from a unitary matrix."""
    mat = np.asarray(u, dtype=np.complex128)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise InvariantError("unitary must be a square matrix")
    defect = float(np.linalg.norm(mat @ mat.conj().T - np.eye(mat.shape[0])))
    if defect > 1e-9:
        raise InvariantError(f"matrix is not unitary (defect {defect:.3e})")
    return _checked(KrausChannel(mat.shape[0], mat.shape[0], (mat,)))


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Gaussian matrix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    phases = np.diag(r).copy()
    phases /= np.abs(phases)
    return q * phases


def random_density(dim: int, rng: np.random.Generator) -> DensityOperator:
    """Hilbert-Schmidt-distributed random state ``G G^+ / Tr``."""
    g = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)
    mat = g @ g.conj().T
    mat /= np.trace(mat).real
    return DensityOperator(mat)
