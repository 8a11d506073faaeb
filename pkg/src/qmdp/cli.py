"""Command line front end.

Subcommands mirror the service endpoints one to one; by default each
command builds the same request model the endpoint accepts and runs the
handler in process, so no server is needed and reruns with an identical
configuration (seed included) produce byte-identical report files.  Pass
``--server URL`` to send the request to a running service instead.

Exit codes: 0 ok, 1 validation failure, 2 parse failure, 3 non-convergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConvergenceError, InvariantError, ParseError
from .service import handlers
from .service.models import (
    DEFAULT_SOURCES,
    EmbedRequest,
    SolveClassicalRequest,
    SolveQmdpRequest,
    SolveQomdpRequest,
    StatePrepRequest,
    ValidateRequest,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_PARSE = 2
EXIT_NONCONVERGENCE = 3

_ENDPOINTS = {
    "validate": "/validate",
    "solve-classical": "/solve-classical",
    "embed": "/embed",
    "solve-qmdp": "/solve-qmdp",
    "solve-qomdp": "/solve-qomdp",
    "state-prep": "/state-prep",
}

_HANDLERS = {
    "validate": handlers.run_validate,
    "solve-classical": handlers.run_solve_classical,
    "embed": handlers.run_embed,
    "solve-qmdp": handlers.run_solve_qmdp,
    "solve-qomdp": handlers.run_solve_qomdp,
    "state-prep": handlers.run_state_prep,
}


def _load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ParseError(f"input file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"input file is not valid JSON: {exc}") from exc


def _write_report(report: dict, path: str | None) -> None:
    if path is None:
        return
    data = json.dumps(report, indent=2, sort_keys=True) + "\n"
    Path(path).write_bytes(data.encode("utf-8"))


def _parse_target(raw: str):
    raw = raw.strip()
    if raw.lstrip("+-").isdigit():
        return int(raw)
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"--target must be a basis index or a JSON vector: {exc}") from exc


def _parse_n_list(raw: str) -> list[int]:
    try:
        return [int(part) for part in raw.split(",") if part]
    except ValueError as exc:
        raise ParseError(f"--n must be an integer or comma list: {exc}") from exc


def _build_request(args):
    command = args.command
    if command == "validate":
        return ValidateRequest(document=_load_json(args.input))
    if command == "solve-classical":
        return SolveClassicalRequest(mdp=_load_json(args.input), eps=args.eps)
    if command == "embed":
        return EmbedRequest(mdp=_load_json(args.input))
    if command == "solve-qmdp":
        return SolveQmdpRequest(
            model=_load_json(args.input),
            n=int(args.n),
            seed=args.seed,
            eps=args.eps,
            beta_override=args.beta_override,
            sources=[s for s in args.sources.split(",") if s],
            threads=args.threads,
            max_iters=args.max_iters,
        )
    if command == "solve-qomdp":
        return SolveQomdpRequest(
            model=_load_json(args.input),
            n=_parse_n_list(args.n),
            seed=args.seed,
            eps=args.eps,
            traj=args.traj,
            horizon=args.horizon,
            threads=args.threads,
        )
    if command == "state-prep":
        return StatePrepRequest(
            dim_x=args.dim_x,
            dim_a=args.dim_a,
            target=_parse_target(args.target),
            n=int(args.n),
            seed=args.seed,
            eps=args.eps,
            beta=args.beta_override if args.beta_override is not None else 0.9,
            horizon=args.horizon if args.horizon is not None else 200,
        )
    raise ParseError(f"unknown command {command!r}")


def _run_remote(server: str, command: str, request) -> tuple[dict, int]:
    import httpx

    url = server.rstrip("/") + _ENDPOINTS[command]
    response = httpx.post(url, json=request.model_dump(), timeout=None)
    if response.status_code == 200:
        return response.json(), EXIT_OK
    detail = response.json() if response.headers.get("content-type", "").startswith("application/json") else {}
    print(f"server error {response.status_code}: {detail.get('detail', response.text)}", file=sys.stderr)
    status_map = {400: EXIT_PARSE, 422: EXIT_VALIDATION, 409: EXIT_NONCONVERGENCE}
    return detail, status_map.get(response.status_code, EXIT_VALIDATION)


def _summarize(command: str, report: dict) -> None:
    if command == "validate":
        for obj in report["objects"]:
            print(f"  {obj['kind']:<10} {obj['label']:<30} {'pass' if obj['passed'] else 'FAIL'}")
        print(f"validate: {'pass' if report['passed'] else 'FAIL'}")
    elif command == "solve-classical":
        print(f"solved in {report['iters']} sweeps, residual {report['residual']:.3e}")
        for x, (v, a) in enumerate(zip(report["values"], report["policy"])):
            print(f"  state {x}: value {v:.6f}  action {a}")
    elif command == "embed":
        model = report["model"]
        n_kraus = len(model["transition_channel"]["kraus"])
        print(f"embedded model: dim_x={model['dim_x']} dim_a={model['dim_a']} "
              f"beta={model['beta']} transition kraus={n_kraus}")
    elif command == "solve-qmdp":
        print(f"grid {report['grid_size']} points, net {report['net_size']} channels, "
              f"{report['iters']} sweeps, residual {report['residual']:.3e}")
        values = report["grid_values"]
        for i in range(min(len(values), 8)):
            print(f"  grid[{i}]: value {values[i]:.6f}  channel {report['policy_indices'][i]}")
        if len(values) > 8:
            print(f"  ... {len(values) - 8} more grid points in the report")
    elif command == "solve-qomdp":
        for run in report["runs"]:
            print(f"  n={run['n']}: grid {run['grid_size']}, "
                  f"mc value {run['mc_value']:.6f} +/- {run['mc_stderr']:.6f}")
        for row in report["trend"]:
            print(f"  trend n={row['n']}: gap to finest {row['gap_to_finest']:.6f} "
                  f"(stderr {row['combined_stderr']:.6f})")
    elif command == "state-prep":
        roll = report["rollout"]
        fids = report["fidelities"]
        print(f"rollout value {roll['value']:.6f} (+/- {roll['truncation_bound']:.2e} truncation), "
              f"baseline {report['baseline']['value']:.6f}")
        print(f"fidelity: start {fids[0]:.6f} -> end {fids[-1]:.6f}")


def _add_common(parser: argparse.ArgumentParser, *, needs_input: bool) -> None:
    if needs_input:
        parser.add_argument("--input", required=True, help="input JSON document")
    parser.add_argument("--output", default=None, help="path for the JSON report")
    parser.add_argument("--server", default=None, help="base URL of a running service")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmdp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="audit every object in a document")
    _add_common(p, needs_input=True)

    p = sub.add_parser("solve-classical", help="value-iterate a finite MDP")
    _add_common(p, needs_input=True)
    p.add_argument("--eps", type=float, default=1e-6)

    p = sub.add_parser("embed", help="embed a finite MDP into quantum components")
    _add_common(p, needs_input=True)

    p = sub.add_parser("solve-qmdp", help="grid/net value iteration on an embedded model")
    _add_common(p, needs_input=True)
    p.add_argument("--n", required=True, help="grid/net resolution")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--beta-override", type=float, default=None)
    p.add_argument("--sources", default=",".join(DEFAULT_SOURCES),
                   help="comma list from classical,appending,closed_loop")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--max-iters", dest="max_iters", type=int, default=100_000)

    p = sub.add_parser("solve-qomdp", help="quantize, solve, and Monte Carlo evaluate")
    _add_common(p, needs_input=True)
    p.add_argument("--n", required=True, help="resolution, or comma list for a trend table")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--traj", type=int, default=10_000)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("state-prep", help="drive a system toward a pure target state")
    _add_common(p, needs_input=False)
    p.add_argument("--dim-x", dest="dim_x", type=int, required=True)
    p.add_argument("--dim-a", dest="dim_a", type=int, required=True)
    p.add_argument("--target", required=True, help="basis index or JSON vector of [re, im] pairs")
    p.add_argument("--n", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--beta-override", type=float, default=None, help="discount (default 0.9)")
    p.add_argument("--horizon", type=int, default=None, help="rollout horizon (default 200)")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "serve":
        import uvicorn

        from .service import create_app

        uvicorn.run(create_app(), host=args.host, port=args.port)
        return EXIT_OK

    try:
        request = _build_request(args)
        if args.server:
            report, code = _run_remote(args.server, args.command, request)
            if code != EXIT_OK:
                return code
        else:
            report = _HANDLERS[args.command](request).model_dump()
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except InvariantError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    _write_report(report, args.output)
    _summarize(args.command, report)
    if args.command == "validate" and not report["passed"]:
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
