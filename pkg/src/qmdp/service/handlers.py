"""Transport-free request handlers shared by the HTTP app and the CLI.

Each handler takes a request model and returns a response model; failures
surface as :class:`~qmdp.errors.ParseError` (bad document),
:class:`~qmdp.errors.InvariantError` (invalid object), or
:class:`~qmdp.errors.ConvergenceError` (solver ran out of sweeps), which
the transports map to status codes and exit codes.
"""

from __future__ import annotations

import numpy as np

from ..approximation import (
    NetSources,
    build_channel_net,
    build_state_grid,
    extend_policy,
    monte_carlo_value,
    quantize_cqomdp,
)
from ..classical import _value_iteration_info
from ..embedding import embed_model
from ..errors import InvariantError, ParseError
from ..quantum import DensityOperator, density_report, validate_channel
from ..serialize import (
    channel_from_json,
    density_from_json,
    embedded_model_from_json,
    embedded_model_to_json,
    mdp_from_json,
    qomdp_from_json,
    raw_density_matrix_from_json,
)
from ..solver import SolverConfig, state_prep_demo, value_iterate
from .models import (
    EmbedRequest,
    EmbedResponse,
    ObjectReport,
    SolveClassicalRequest,
    SolveClassicalResponse,
    SolveQmdpRequest,
    SolveQmdpResponse,
    SolveQomdpRequest,
    SolveQomdpResponse,
    StatePrepRequest,
    StatePrepResponse,
    ValidateRequest,
    ValidateResponse,
)

__all__ = [
    "run_validate",
    "run_solve_classical",
    "run_embed",
    "run_solve_qmdp",
    "run_solve_qomdp",
    "run_state_prep",
]


def _validate_one(kind: str, label: str, doc) -> ObjectReport:
    if kind == "channel":
        report = validate_channel(channel_from_json(doc))
        return ObjectReport(kind=kind, label=label, passed=report.passed, checks=report.as_dict())
    if kind == "density":
        checks = density_report(raw_density_matrix_from_json(doc))
        return ObjectReport(kind=kind, label=label, passed=checks["passed"], checks=checks)
    if kind == "mdp":
        try:
            mdp_from_json(doc)
        except InvariantError as exc:
            return ObjectReport(kind=kind, label=label, passed=False, checks={"error": str(exc)})
        return ObjectReport(kind=kind, label=label, passed=True, checks={"stochastic": True})
    raise ParseError(f"unknown object kind {kind!r}")


def _walk_document(doc) -> list[tuple[str, str, dict]]:
    """Recognize the objects carried by a document.

    Accepts a bare channel / density operator / finite MDP / embedded model
    / measured-channel model, or ``{"objects": [...]}`` with any mix.
    """
    if not isinstance(doc, dict):
        raise ParseError("document root must be a JSON object")
    if "objects" in doc:
        found = []
        for idx, sub in enumerate(doc["objects"]):
            for kind, label, payload in _walk_document(sub):
                found.append((kind, f"objects[{idx}]{label}", payload))
        return found
    if "kraus" in doc:
        return [("channel", "", doc)]
    if "matrix" in doc and "dim" in doc:
        return [("density", "", doc)]
    if "transition_channel" in doc:
        found = [("channel", ".transition_channel", doc["transition_channel"])]
        if "source_mdp" in doc:
            found.append(("mdp", ".source_mdp", doc["source_mdp"]))
        return found
    if "divisible" in doc and "indivisible" in doc:
        found = []
        for table in ("divisible", "indivisible"):
            for action, ch in doc[table].items():
                found.append(("channel", f".{table}[{action}]", ch))
        return found
    if "n_states" in doc and "p" in doc:
        return [("mdp", "", doc)]
    raise ParseError("document matches no known object schema")


def run_validate(request: ValidateRequest) -> ValidateResponse:
    objects = [
        _validate_one(kind, label or kind, payload)
        for kind, label, payload in _walk_document(request.document)
    ]
    return ValidateResponse(passed=all(o.passed for o in objects), objects=objects)


def run_solve_classical(request: SolveClassicalRequest) -> SolveClassicalResponse:
    mdp = mdp_from_json(request.mdp)
    values, policy, iters, residual = _value_iteration_info(mdp, request.eps)
    return SolveClassicalResponse(
        config={"eps": request.eps, "beta": mdp.beta},
        values=[float(v) for v in values],
        policy=[int(a) for a in policy],
        iters=iters,
        residual=residual,
    )


def run_embed(request: EmbedRequest) -> EmbedResponse:
    mdp = mdp_from_json(request.mdp)
    return EmbedResponse(model=embedded_model_to_json(embed_model(mdp)))


def _net_sources(names: list[str]) -> NetSources:
    valid = {"classical", "appending", "closed_loop"}
    unknown = set(names) - valid
    if unknown:
        raise ParseError(f"unknown net sources {sorted(unknown)}; valid: {sorted(valid)}")
    if not names:
        raise ParseError("at least one net source is required")
    return NetSources(
        classical="classical" in names,
        appending="appending" in names,
        closed_loop="closed_loop" in names,
    )


def run_solve_qmdp(request: SolveQmdpRequest) -> SolveQmdpResponse:
    model = embedded_model_from_json(request.model)
    beta = request.beta_override if request.beta_override is not None else model.beta
    grid = build_state_grid(model.dim_x, request.n, request.seed)
    net = build_channel_net(
        model.dim_x, model.dim_a, request.n, request.seed, sources=_net_sources(request.sources)
    )
    config = SolverConfig(beta=beta, eps=request.eps, max_iters=request.max_iters)
    result = value_iterate(
        config, net, model.transition_channel, model.cost, grid, threads=request.threads
    )
    return SolveQmdpResponse(
        config={
            "n": request.n,
            "seed": request.seed,
            "eps": request.eps,
            "beta": beta,
            "sources": sorted(request.sources),
            "threads": request.threads,
            "max_iters": request.max_iters,
        },
        grid_provenance=grid.provenance,
        net_provenance=net.provenance,
        grid_size=len(grid),
        net_size=len(net),
        grid_values=[float(v) for v in result.values.values],
        policy_indices=[int(k) for k in result.policy.indices],
        iters=result.iters,
        residual=result.residual,
        converged=result.converged,
    )


def _qomdp_horizon(model, budget: float = 1e-4) -> int:
    c_max = max(obs.operator_norm() for obs in model.cost)
    tail = c_max / (1.0 - model.beta)
    if tail <= budget:
        return 1
    return int(np.ceil(np.log(budget / tail) / np.log(model.beta))) + 1


def run_solve_qomdp(request: SolveQomdpRequest) -> SolveQomdpResponse:
    model = qomdp_from_json(request.model)
    rho0 = (
        density_from_json(request.rho0)
        if request.rho0 is not None
        else DensityOperator.maximally_mixed(model.dim)
    )
    horizon = request.horizon if request.horizon is not None else _qomdp_horizon(model)
    c_max = max(obs.operator_norm() for obs in model.cost)
    truncation = model.beta**horizon * c_max / (1.0 - model.beta)

    runs = []
    for n in request.n:
        grid = build_state_grid(model.dim, n, request.seed)
        finite = quantize_cqomdp(model, grid, threads=request.threads)
        values, policy, iters, residual = _value_iteration_info(finite, request.eps)
        extended = extend_policy(policy, grid)
        mc_mean, mc_stderr = monte_carlo_value(
            model, extended, rho0, horizon, request.traj, request.seed, threads=request.threads
        )
        runs.append(
            {
                "n": n,
                "grid_size": len(grid),
                "grid_provenance": grid.provenance,
                "values": [float(v) for v in values],
                "policy": [int(a) for a in policy],
                "iters": iters,
                "residual": residual,
                "mc_value": mc_mean,
                "mc_stderr": mc_stderr,
                "truncation_bound": truncation,
            }
        )

    trend = []
    if len(runs) > 1:
        reference = runs[-1]
        for run in runs:
            trend.append(
                {
                    "n": run["n"],
                    "gap_to_finest": abs(run["mc_value"] - reference["mc_value"]),
                    "combined_stderr": run["mc_stderr"] + reference["mc_stderr"],
                }
            )
    return SolveQomdpResponse(
        config={
            "n": list(request.n),
            "seed": request.seed,
            "eps": request.eps,
            "traj": request.traj,
            "horizon": horizon,
            "threads": request.threads,
        },
        runs=runs,
        trend=trend,
    )


def run_state_prep(request: StatePrepRequest) -> StatePrepResponse:
    if isinstance(request.target, int):
        if not 0 <= request.target < request.dim_x:
            raise ParseError(f"target basis index {request.target} out of range")
        target = np.zeros(request.dim_x, dtype=np.complex128)
        target[request.target] = 1.0
    else:
        from ..serialize import vector_from_json

        target = vector_from_json(request.target)
    rho0 = density_from_json(request.rho0) if request.rho0 is not None else None
    config = SolverConfig(
        beta=request.beta, eps=request.eps, horizon_for_rollout=request.horizon
    )
    report = state_prep_demo(
        request.dim_x,
        request.dim_a,
        target,
        config,
        n=request.n,
        seed=request.seed,
        rho0=rho0,
    )
    return StatePrepResponse(
        config={
            "dim_x": request.dim_x,
            "dim_a": request.dim_a,
            "n": request.n,
            "seed": request.seed,
            "eps": request.eps,
            "beta": request.beta,
            "horizon": request.horizon,
        },
        grid_provenance=report.grid.provenance,
        net_provenance=report.net.provenance,
        grid_values=[float(v) for v in report.solve.values.values],
        policy_indices=[int(k) for k in report.solve.policy.indices],
        iters=report.solve.iters,
        residual=report.solve.residual,
        rollout=report.rollout_result.as_dict(),
        fidelities=[float(f) for f in report.fidelities],
        baseline={"value": report.baseline_value, "xi_index": report.baseline_xi_index},
    )
