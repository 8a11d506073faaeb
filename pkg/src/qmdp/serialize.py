"""JSON encodings for every object that crosses a file or wire boundary.

Scalars: a complex number is a two-element array ``[re, im]``; a matrix is
a row-major nested list of those pairs.  Round-trips are bit-exact at
double precision because ``json`` serializes floats with ``repr`` and
``float(repr(x)) == x``.

Document schemas:

* channel            ``{"in_dim", "out_dim", "kraus": [matrix, ...]}``
* density operator   ``{"dim", "matrix"}``
* finite MDP         ``{"n_states", "n_actions", "p", "c", "beta"}`` with
  ``p`` indexed ``[x][a][y]`` in the file (transposed on load)
* embedded model     ``{"dim_x", "dim_a", "beta", "basis",
  "transition_channel", "cost", "source_mdp"?}``
* QOMDP              ``{"dim", "actions", "observations", "divisible",
  "indivisible", "cost", "beta"}`` with per-action maps
* policy             ``{"kind", "stationary", "sequence": [payload, ...]}``
* state grid / channel net carry their provenance and seed so they can be
  reconstructed exactly.
"""

from __future__ import annotations

import json

import numpy as np

from .approximation import ChannelNet, QOMDPModel, StateGrid
from .classical import FiniteMDP
from .embedding import EmbeddedModel, embed_classical_policy
from .errors import ParseError
from .policies import MarkovQuantumPolicy, PhiFamily, closed_loop_channel, open_loop_channel
from .quantum import DensityOperator, HermitianObservable, KrausChannel

__all__ = [
    "matrix_to_json",
    "matrix_from_json",
    "vector_to_json",
    "vector_from_json",
    "channel_to_json",
    "channel_from_json",
    "density_to_json",
    "density_from_json",
    "mdp_to_json",
    "mdp_from_json",
    "embedded_model_to_json",
    "embedded_model_from_json",
    "qomdp_to_json",
    "qomdp_from_json",
    "grid_to_json",
    "grid_from_json",
    "net_to_json",
    "net_from_json",
    "policy_to_json",
    "policy_from_json",
    "canonical_json",
    "channel_key",
]


def matrix_to_json(mat: np.ndarray) -> list:
    arr = np.asarray(mat, dtype=np.complex128)
    return [[[float(z.real), float(z.imag)] for z in row] for row in arr]


def matrix_from_json(data) -> np.ndarray:
    try:
        arr = np.asarray(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"matrix is not a nested list of [re, im] pairs: {exc}") from exc
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ParseError(f"matrix has shape {arr.shape}, expected (rows, cols, 2)")
    # assign components separately: complex addition would flip the sign of -0.0
    out = np.empty(arr.shape[:2], dtype=np.complex128)
    out.real = arr[..., 0]
    out.imag = arr[..., 1]
    return out


def vector_to_json(vec: np.ndarray) -> list:
    arr = np.asarray(vec, dtype=np.complex128).reshape(-1)
    return [[float(z.real), float(z.imag)] for z in arr]


def vector_from_json(data) -> np.ndarray:
    try:
        arr = np.asarray(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"vector is not a list of [re, im] pairs: {exc}") from exc
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ParseError(f"vector has shape {arr.shape}, expected (n, 2)")
    out = np.empty(arr.shape[0], dtype=np.complex128)
    out.real = arr[:, 0]
    out.imag = arr[:, 1]
    return out


def channel_to_json(ch: KrausChannel) -> dict:
    return {
        "in_dim": ch.in_dim,
        "out_dim": ch.out_dim,
        "kraus": [matrix_to_json(k) for k in ch.kraus],
    }


def channel_from_json(data) -> KrausChannel:
    try:
        kraus = tuple(matrix_from_json(k) for k in data["kraus"])
        return KrausChannel(int(data["in_dim"]), int(data["out_dim"]), kraus)
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed channel document: {exc}") from exc


def density_to_json(rho: DensityOperator) -> dict:
    return {"dim": rho.dim, "matrix": matrix_to_json(rho.matrix)}


def density_from_json(data) -> DensityOperator:
    try:
        return DensityOperator(matrix_from_json(data["matrix"]))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed density document: {exc}") from exc


def raw_density_matrix_from_json(data) -> np.ndarray:
    """Parse without invariant checks; used by the validation command."""
    try:
        return matrix_from_json(data["matrix"])
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed density document: {exc}") from exc


def mdp_to_json(mdp: FiniteMDP) -> dict:
    # file layout p[x][a][y]; in memory p[y, x, a]
    p_file = np.transpose(mdp.p, (1, 2, 0))
    return {
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "p": p_file.tolist(),
        "c": mdp.c.tolist(),
        "beta": mdp.beta,
    }


def mdp_from_json(data) -> FiniteMDP:
    try:
        p_file = np.asarray(data["p"], dtype=float)
        c = np.asarray(data["c"], dtype=float)
        beta = float(data["beta"])
        n_states, n_actions = int(data["n_states"]), int(data["n_actions"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed MDP document: {exc}") from exc
    if p_file.shape != (n_states, n_actions, n_states):
        raise ParseError(f"transition table shape {p_file.shape} != (X, A, Y)")
    if c.shape != (n_states, n_actions):
        raise ParseError(f"cost table shape {c.shape} != (X, A)")
    return FiniteMDP(p=np.transpose(p_file, (2, 0, 1)), c=c, beta=beta)


def embedded_model_to_json(model: EmbeddedModel) -> dict:
    doc = {
        "dim_x": model.dim_x,
        "dim_a": model.dim_a,
        "beta": model.beta,
        "basis": "pair (x, a) at flat index x * dim_a + a",
        "transition_channel": channel_to_json(model.transition_channel),
        "cost": matrix_to_json(model.cost.matrix),
    }
    if model.source is not None:
        doc["source_mdp"] = mdp_to_json(model.source)
    return doc


def embedded_model_from_json(data) -> EmbeddedModel:
    try:
        source = mdp_from_json(data["source_mdp"]) if "source_mdp" in data else None
        return EmbeddedModel(
            dim_x=int(data["dim_x"]),
            dim_a=int(data["dim_a"]),
            transition_channel=channel_from_json(data["transition_channel"]),
            cost=HermitianObservable(matrix_from_json(data["cost"])),
            beta=float(data["beta"]),
            source=source,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed embedded model document: {exc}") from exc


def qomdp_to_json(model: QOMDPModel) -> dict:
    actions = [str(a) for a in model.actions]
    return {
        "dim": model.dim,
        "actions": actions,
        "observations": list(model.observations),
        "divisible": {a: channel_to_json(ch) for a, ch in zip(actions, model.divisible)},
        "indivisible": {a: channel_to_json(ch) for a, ch in zip(actions, model.indivisible)},
        "cost": {a: matrix_to_json(obs.matrix) for a, obs in zip(actions, model.cost)},
        "beta": model.beta,
    }


def qomdp_from_json(data) -> QOMDPModel:
    try:
        actions = tuple(str(a) for a in data["actions"])
        observations = tuple(data["observations"])
        divisible = tuple(channel_from_json(data["divisible"][a]) for a in actions)
        indivisible = tuple(channel_from_json(data["indivisible"][a]) for a in actions)
        cost = tuple(HermitianObservable(matrix_from_json(data["cost"][a])) for a in actions)
        return QOMDPModel(
            dim=int(data["dim"]),
            actions=actions,
            observations=observations,
            divisible=divisible,
            indivisible=indivisible,
            cost=cost,
            beta=float(data["beta"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed QOMDP document: {exc}") from exc


def grid_to_json(grid: StateGrid) -> dict:
    return {
        "points": [density_to_json(p) for p in grid.points],
        "resolution": grid.resolution,
        "provenance": grid.provenance,
        "covering_radius_estimate": grid.covering_radius_estimate,
    }


def grid_from_json(data) -> StateGrid:
    try:
        return StateGrid(
            points=tuple(density_from_json(p) for p in data["points"]),
            resolution=float(data["resolution"]),
            provenance=dict(data["provenance"]),
            covering_radius_estimate=float(data["covering_radius_estimate"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed grid document: {exc}") from exc


def net_to_json(net: ChannelNet) -> dict:
    return {
        "channels": [channel_to_json(ch) for ch in net.channels],
        "provenance": net.provenance,
    }


def net_from_json(data) -> ChannelNet:
    try:
        return ChannelNet(
            channels=tuple(channel_from_json(ch) for ch in data["channels"]),
            provenance=dict(data["provenance"]),
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed net document: {exc}") from exc


def _phi_to_json(phi: PhiFamily) -> dict:
    return {
        "dim_x": phi.dim_x,
        "dim_a": phi.dim_a,
        "dim_l": phi.dim_l,
        "vectors": [
            [vector_to_json(phi.vectors[x, a]) for a in range(phi.dim_a)]
            for x in range(phi.dim_x)
        ],
    }


def _phi_from_json(data) -> PhiFamily:
    vectors = np.stack(
        [
            np.stack([vector_from_json(v) for v in row])
            for row in data["vectors"]
        ]
    )
    return PhiFamily(vectors)


def policy_to_json(policy: MarkovQuantumPolicy, dim_x: int, dim_a: int, payloads=None) -> dict:
    """Serialize a policy as kind-tagged payloads.

    ``payloads`` may supply the structured payload (kernel, appended state,
    or phi family) for each channel in ``steps + (tail,)``; otherwise every
    channel is emitted as a raw Kraus list under the ``general`` layout.
    """
    channels = tuple(policy.steps) + (policy.tail,)
    if payloads is None:
        sequence = [{"channel": channel_to_json(ch)} for ch in channels]
    else:
        if len(payloads) != len(channels):
            raise ParseError("payload count must match the channel count")
        sequence = []
        for payload in payloads:
            if isinstance(payload, PhiFamily):
                sequence.append({"phi": _phi_to_json(payload)})
            elif isinstance(payload, DensityOperator):
                sequence.append({"xi": density_to_json(payload)})
            elif isinstance(payload, KrausChannel):
                sequence.append({"channel": channel_to_json(payload)})
            else:
                sequence.append({"kernel": np.asarray(payload, dtype=float).tolist()})
    return {
        "kind": policy.tag,
        "stationary": policy.stationary,
        "dim_x": dim_x,
        "dim_a": dim_a,
        "sequence": sequence,
    }


def policy_from_json(data) -> MarkovQuantumPolicy:
    try:
        kind = str(data["kind"])
        dim_x = int(data["dim_x"])
        sequence = list(data["sequence"])
        if not sequence:
            raise ParseError("policy sequence is empty")
        channels = []
        for payload in sequence:
            if "kernel" in payload:
                channels.append(embed_classical_policy(np.asarray(payload["kernel"], dtype=float)))
            elif "xi" in payload:
                channels.append(open_loop_channel(density_from_json(payload["xi"]), dim_x))
            elif "phi" in payload:
                channels.append(closed_loop_channel(_phi_from_json(payload["phi"])))
            elif "channel" in payload:
                channels.append(channel_from_json(payload["channel"]))
            else:
                raise ParseError(f"unknown policy payload keys {sorted(payload)}")
        return MarkovQuantumPolicy(tail=channels[-1], steps=tuple(channels[:-1]), tag=kind)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed policy document: {exc}") from exc


def canonical_json(obj) -> str:
    """Compact, key-sorted JSON; equal objects serialize identically."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def channel_key(ch: KrausChannel) -> str:
    """Canonical string identity of a channel, used for set comparisons."""
    return canonical_json(channel_to_json(ch))
