"""FastAPI application exposing the solver over HTTP.

Error mapping: unparseable documents give 400, objects violating their
invariants give 422, and non-converged solves give 409; the validate
endpoint reports per-object failures in its body with status 200.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..errors import ConvergenceError, InvariantError, ParseError
from . import handlers
from .models import (
    EmbedRequest,
    EmbedResponse,
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

__all__ = ["create_app"]


def create_app() -> FastAPI:
    app = FastAPI(
        title="qmdp",
        description="Solver service for quantum Markov decision processes",
        version="0.1.0",
    )

    @app.exception_handler(ParseError)
    async def _parse_error(_: Request, exc: ParseError):
        return JSONResponse(status_code=400, content={"error": "parse", "detail": str(exc)})

    @app.exception_handler(InvariantError)
    async def _invariant_error(_: Request, exc: InvariantError):
        return JSONResponse(status_code=422, content={"error": "validation", "detail": str(exc)})

    @app.exception_handler(ConvergenceError)
    async def _convergence_error(_: Request, exc: ConvergenceError):
        return JSONResponse(
            status_code=409,
            content={"error": "non-convergence", "detail": str(exc), "residual": exc.residual},
        )

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/validate", response_model=ValidateResponse)
    def validate(request: ValidateRequest) -> ValidateResponse:
        return handlers.run_validate(request)

    @app.post("/solve-classical", response_model=SolveClassicalResponse)
    def solve_classical(request: SolveClassicalRequest) -> SolveClassicalResponse:
        return handlers.run_solve_classical(request)

    @app.post("/embed", response_model=EmbedResponse)
    def embed(request: EmbedRequest) -> EmbedResponse:
        return handlers.run_embed(request)

    @app.post("/solve-qmdp", response_model=SolveQmdpResponse)
    def solve_qmdp(request: SolveQmdpRequest) -> SolveQmdpResponse:
        return handlers.run_solve_qmdp(request)

    @app.post("/solve-qomdp", response_model=SolveQomdpResponse)
    def solve_qomdp(request: SolveQomdpRequest) -> SolveQomdpResponse:
        return handlers.run_solve_qomdp(request)

    @app.post("/state-prep", response_model=StatePrepResponse)
    def state_prep(request: StatePrepRequest) -> StatePrepResponse:
        return handlers.run_state_prep(request)

    return app
