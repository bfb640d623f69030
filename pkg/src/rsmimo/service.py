"""HTTP service exposing the simulator: run sweeps, verify, list presets.

The handlers are plain functions on pydantic models so that the CLI can call
them in process; the FastAPI app is a thin routing layer on top.  Long sweeps
run synchronously within the request, which matches the desk-scale workloads
this service is meant for.
"""

from __future__ import annotations

from dataclasses import replace

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .analysis import run_equivalence_suite
from .model import ConfigurationError, SystemConfig
from .scenarios import (
    Scenario,
    SweepPoint,
    SweepResult,
    reference_scenarios,
    run_scenario,
)


class ScenarioSpec(BaseModel):
    """Wire mirror of :class:`~rsmimo.scenarios.Scenario`."""

    name: str = "custom"
    n_tx: int = 12
    rx_antennas: list[int] = Field(default_factory=lambda: [2, 2, 2, 2, 2, 2])
    streams_per_user: list[int] | None = None
    noise_var: float = 1.0
    csit: str = "perfect"
    error_var: float = 0.0
    xi: float = 0.94
    alpha: float = 0.6
    precoder: str = "rbd"
    combiner: str = "none"
    rs_enabled: bool = True
    sweep: str = "snr"
    points: list[float] = Field(default_factory=lambda: [0, 5, 10, 15, 20, 25, 30])
    fixed_snr_db: float = 20.0
    n_channels: int = 200
    n_errors: int = 20
    grid_size: int = 33
    seed: int = 1
    common_grid: list[float] | None = None
    min_of_means: bool = False

    def to_scenario(self) -> Scenario:
        config = SystemConfig(
            n_tx=self.n_tx,
            rx_antennas=tuple(self.rx_antennas),
            streams_per_user=tuple(self.streams_per_user) if self.streams_per_user else None,
            noise_var=self.noise_var,
            csit=self.csit,
            error_var=self.error_var,
            error_xi=self.xi,
            error_alpha=self.alpha,
        )
        return Scenario(
            name=self.name,
            config=config,
            precoder=self.precoder,
            combiner=self.combiner,
            rs_enabled=self.rs_enabled,
            sweep=self.sweep,
            points=tuple(self.points),
            fixed_snr_db=self.fixed_snr_db,
            n_channels=self.n_channels,
            n_errors=self.n_errors,
            grid_size=self.grid_size,
            seed=self.seed,
            common_grid=tuple(self.common_grid) if self.common_grid is not None else None,
            min_of_means=self.min_of_means,
        )

    @classmethod
    def from_scenario(cls, s: Scenario) -> "ScenarioSpec":
        return cls(
            name=s.name,
            n_tx=s.config.n_tx,
            rx_antennas=list(s.config.rx_antennas),
            streams_per_user=(
                list(s.config.streams_per_user) if s.config.streams_per_user else None
            ),
            noise_var=s.config.noise_var,
            csit=s.config.csit,
            error_var=s.config.error_var,
            xi=s.config.error_xi,
            alpha=s.config.error_alpha,
            precoder=s.precoder,
            combiner=s.combiner,
            rs_enabled=s.rs_enabled,
            sweep=s.sweep,
            points=list(s.points),
            fixed_snr_db=s.fixed_snr_db,
            n_channels=s.n_channels,
            n_errors=s.n_errors,
            grid_size=s.grid_size,
            seed=s.seed,
            common_grid=list(s.common_grid) if s.common_grid is not None else None,
            min_of_means=s.min_of_means,
        )


class RunRequest(BaseModel):
    preset: str | None = None
    scenario: ScenarioSpec | None = None
    seed: int | None = None
    n_channels: int | None = None
    n_errors: int | None = None
    workers: int = 1
    timing: bool = False


class SweepRow(BaseModel):
    sweep_value: float
    esr: float
    common: float
    private: float
    stderr: float
    seconds: float


class RunResponse(BaseModel):
    name: str
    sweep: str
    rows: list[SweepRow]

    def to_result(self) -> SweepResult:
        return SweepResult(
            name=self.name,
            sweep=self.sweep,
            points=tuple(SweepPoint(**row.model_dump()) for row in self.rows),
        )


class VerifyRequest(BaseModel):
    instances: int = 1000
    seed: int = 20240901


class CheckRow(BaseModel):
    name: str
    instances: int
    max_residual: float
    tolerance: float
    passed: bool


class DeviationRow(BaseModel):
    anchor: str
    printed: str
    implemented: str
    max_residual: float


class VerifyResponse(BaseModel):
    passed: bool
    instances: int
    elapsed_seconds: float
    checks: list[CheckRow]
    deviations: list[DeviationRow]


class ScenarioInfo(BaseModel):
    name: str
    precoder: str
    combiner: str
    rs_enabled: bool
    sweep: str
    points: list[float]
    csit: str
    n_channels: int
    n_errors: int


class HealthResponse(BaseModel):
    status: str
    version: str


def resolve_scenario(request: RunRequest) -> Scenario:
    if (request.preset is None) == (request.scenario is None):
        raise ConfigurationError("provide exactly one of 'preset' or 'scenario'")
    if request.preset is not None:
        catalog = reference_scenarios()
        if request.preset not in catalog:
            raise ConfigurationError(f"unknown preset {request.preset!r}")
        scenario = catalog[request.preset]
    else:
        scenario = request.scenario.to_scenario()
    overrides = {}
    if request.seed is not None:
        overrides["seed"] = request.seed
    if request.n_channels is not None:
        overrides["n_channels"] = request.n_channels
    if request.n_errors is not None:
        overrides["n_errors"] = request.n_errors
    return replace(scenario, **overrides) if overrides else scenario


def handle_run(request: RunRequest) -> RunResponse:
    scenario = resolve_scenario(request)
    result = run_scenario(scenario, workers=request.workers, timing=request.timing)
    rows = [
        SweepRow(
            sweep_value=p.sweep_value,
            esr=p.esr,
            common=p.common,
            private=p.private,
            stderr=p.stderr,
            seconds=p.seconds,
        )
        for p in result.points
    ]
    return RunResponse(name=result.name, sweep=result.sweep, rows=rows)


def handle_verify(request: VerifyRequest) -> VerifyResponse:
    report = run_equivalence_suite(request.instances, request.seed)
    return VerifyResponse(
        passed=report.passed,
        instances=report.instances,
        elapsed_seconds=report.elapsed_seconds,
        checks=[
            CheckRow(
                name=c.name,
                instances=c.instances,
                max_residual=c.max_residual,
                tolerance=c.tolerance,
                passed=c.passed,
            )
            for c in report.checks
        ],
        deviations=[
            DeviationRow(
                anchor=d.anchor,
                printed=d.printed,
                implemented=d.implemented,
                max_residual=d.max_residual,
            )
            for d in report.deviations
        ],
    )


def catalog_info() -> list[ScenarioInfo]:
    return [
        ScenarioInfo(
            name=s.name,
            precoder=s.precoder,
            combiner=s.combiner,
            rs_enabled=s.rs_enabled,
            sweep=s.sweep,
            points=list(s.points),
            csit=s.config.csit,
            n_channels=s.n_channels,
            n_errors=s.n_errors,
        )
        for s in reference_scenarios().values()
    ]


app = FastAPI(
    title="rsmimo",
    description="Rate-splitting MU-MIMO downlink simulator",
    version=__version__,
)


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.get("/scenarios", response_model=list[ScenarioInfo])
def scenarios() -> list[ScenarioInfo]:
    return catalog_info()


@app.post("/run", response_model=RunResponse)
def run(request: RunRequest) -> RunResponse:
    try:
        return handle_run(request)
    except ConfigurationError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


@app.post("/verify", response_model=VerifyResponse)
def verify(request: VerifyRequest) -> VerifyResponse:
    try:
        return handle_verify(request)
    except ConfigurationError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
