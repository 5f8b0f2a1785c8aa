"""Request and response bodies for the HTTP service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field, model_validator

Method = Literal["direct", "gmres"]
SweepMethod = Literal["direct", "gmres", "refactor"]


class SyntheticSpec(BaseModel):
    n: int = Field(ge=2)
    avg_degree: float = Field(default=3.0, gt=0)
    seed: int = 0


class CaseSource(BaseModel):
    """Exactly one of ``text`` (case file contents) or ``synthetic``."""

    text: str | None = None
    synthetic: SyntheticSpec | None = None

    @model_validator(mode="after")
    def _exactly_one(self):
        if (self.text is None) == (self.synthetic is None):
            raise ValueError("provide exactly one of text or synthetic")
        return self


class CaseInfo(BaseModel):
    case_id: str
    name: str
    n_buses: int
    n_branches: int
    in_service: int
    slack_bus: int
    nnz_factor: int
    factor_time_us: float
    base_residual: float


class SolveResponse(BaseModel):
    case_id: str
    bus_ids: list[int]  # every bus in case order, slack included
    angles: list[float]  # radians, slack pinned at 0.0
    solve_time_us: float
    residual: float
    condition_estimate: float
    nnz_factor: int
    factor_time_us: float


class ContingencyRequest(BaseModel):
    branches: list[int] = Field(min_length=1)
    gen_buses: list[int] = Field(default_factory=list)
    method: Method = "direct"
    tol: float = Field(default=1e-12, gt=0)
    max_it: int | None = Field(default=None, ge=1)


class ContingencyResponse(BaseModel):
    case_id: str
    branches: list[int]
    method: Method
    bus_ids: list[int]
    angles: list[float]
    residual: float
    time_us: float
    iterations: int
    rho: int
    m: int


class SweepRequest(BaseModel):
    k: int = 1
    selector: Literal["exhaustive", "random", "list"] = "random"
    samples: int = 100
    seed: int = 0
    explicit: list[list[int]] = Field(default_factory=list)
    methods: list[SweepMethod] = Field(
        default_factory=lambda: ["direct", "gmres", "refactor"])
    tol: float = 1e-12
    max_it: int | None = None
    repetitions: int = 20
    jobs: int = 1


class SweepResponse(BaseModel):
    case_id: str
    results: list[dict]
    summary: dict
    csv: str


class SelftestRequest(BaseModel):
    n_max: int = 60
    seed: int = 0


class SelftestSuite(BaseModel):
    name: str
    cases: int
    failures: list[str]


class SelftestResponse(BaseModel):
    seed: int
    ok: bool
    suites: list[SelftestSuite]
