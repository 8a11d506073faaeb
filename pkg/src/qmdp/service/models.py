"""Pydantic request and response models for the solver service.

Documents (MDPs, channels, models) travel as plain JSON objects in the
shapes described in :mod:`qmdp.serialize`; the models here type the
surrounding envelope: resolutions, seeds, tolerances, and report fields.
Seeds are mandatory wherever a randomized construction is involved.
"""

from __future__ import annotations

from pydantic import BaseModel, Field

DEFAULT_SOURCES = ["classical", "appending", "closed_loop"]


class ValidateRequest(BaseModel):
    document: dict


class ObjectReport(BaseModel):
    kind: str
    label: str
    passed: bool
    checks: dict


class ValidateResponse(BaseModel):
    command: str = "validate"
    passed: bool
    objects: list[ObjectReport]


class SolveClassicalRequest(BaseModel):
    mdp: dict
    eps: float = Field(default=1e-6, gt=0)


class SolveClassicalResponse(BaseModel):
    command: str = "solve-classical"
    config: dict
    values: list[float]
    policy: list[int]
    iters: int
    residual: float


class EmbedRequest(BaseModel):
    mdp: dict


class EmbedResponse(BaseModel):
    command: str = "embed"
    model: dict


class SolveQmdpRequest(BaseModel):
    model: dict
    n: int = Field(ge=1)
    seed: int
    eps: float = Field(default=1e-6, gt=0)
    beta_override: float | None = None
    sources: list[str] = Field(default_factory=lambda: list(DEFAULT_SOURCES))
    threads: int = Field(default=1, ge=1)
    max_iters: int = Field(default=100_000, ge=1)


class SolveQmdpResponse(BaseModel):
    command: str = "solve-qmdp"
    config: dict
    grid_provenance: dict
    net_provenance: dict
    grid_size: int
    net_size: int
    grid_values: list[float]
    policy_indices: list[int]
    iters: int
    residual: float
    converged: bool


class SolveQomdpRequest(BaseModel):
    model: dict
    n: list[int] = Field(min_length=1)
    seed: int
    eps: float = Field(default=1e-6, gt=0)
    traj: int = Field(default=10_000, ge=1)
    horizon: int | None = Field(default=None, ge=1)
    rho0: dict | None = None
    threads: int = Field(default=1, ge=1)


class SolveQomdpResponse(BaseModel):
    command: str = "solve-qomdp"
    config: dict
    runs: list[dict]
    trend: list[dict]


class StatePrepRequest(BaseModel):
    dim_x: int = Field(ge=1)
    dim_a: int = Field(ge=1)
    target: int | list
    n: int = Field(ge=1)
    seed: int
    eps: float = Field(default=1e-6, gt=0)
    beta: float = Field(default=0.9, gt=0, lt=1)
    horizon: int = Field(default=200, ge=1)
    rho0: dict | None = None


class StatePrepResponse(BaseModel):
    command: str = "state-prep"
    config: dict
    grid_provenance: dict
    net_provenance: dict
    grid_values: list[float]
    policy_indices: list[int]
    iters: int
    residual: float
    rollout: dict
    fidelities: list[float]
    baseline: dict
