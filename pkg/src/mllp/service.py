"""HTTP front end: the pipeline behind a small JSON API.

Endpoints mirror the command line one to one:

- ``POST /validate``     parse a model document and report problems
- ``POST /check``        classify the replacement structure of a model
- ``POST /reconstruct``  run the full pipeline and return distributions
- ``POST /matrices``     build one design matrix
- ``GET  /healthz``      liveness probe

Model documents travel as plain JSON objects inside the request body,
in exactly the format :func:`mllp.model.parse_model` accepts.  Domain
errors come back as structured objects: 422 for invalid documents, 409
for reconstructions the mathematics refuses (non-identifiable
replacements, non-convergence).
"""

from __future__ import annotations

import warnings
from typing import Any

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .model import (
    ModelError,
    NonIdentifiableModelError,
    check_model,
    check_to_dict,
    matrix_table,
    model_from_dict,
    pipeline_to_dict,
    run_pipeline,
)
from .params import NonConvergenceError
from .tables import MllpError

__all__ = ["app", "create_app"]


class CheckRequest(BaseModel):
    model: dict
    trials: int = Field(default=50, ge=1, le=10_000)
    seed: int = 0


class ReconstructRequest(BaseModel):
    model: dict
    trials: int = Field(default=50, ge=1, le=10_000)
    seed: int = 0
    tol: float | None = Field(default=None, gt=0.0)


class ValidateRequest(BaseModel):
    model: dict


class MatricesRequest(BaseModel):
    levels: list[int]
    margin: list[int]
    kind: str = "C"
    terms: list[str] | None = None


class ValidateResponse(BaseModel):
    valid: bool
    errors: list[str]
    warnings: list[str]


class MatricesResponse(BaseModel):
    kind: str
    header: list[str]
    rows: list[list[Any]]
    terms_on_columns: bool


def create_app() -> FastAPI:
    app = FastAPI(
        title="marginal log-linear parameterizations",
        description=__doc__,
        version="0.1.0",
    )

    @app.exception_handler(NonIdentifiableModelError)
    async def _non_identifiable(request: Request, exc: NonIdentifiableModelError):
        return JSONResponse(
            status_code=409,
            content={
                "error": {
                    "type": "NonIdentifiable",
                    "message": str(exc),
                    "verdict": exc.verdict.to_dict(),
                }
            },
        )

    @app.exception_handler(NonConvergenceError)
    async def _non_convergence(request: Request, exc: NonConvergenceError):
        return JSONResponse(
            status_code=409,
            content={
                "error": {
                    "type": type(exc).__name__,
                    "message": str(exc),
                    "iterations": exc.iterations,
                }
            },
        )

    @app.exception_handler(MllpError)
    async def _domain_error(request: Request, exc: MllpError):
        return JSONResponse(
            status_code=422,
            content={"error": {"type": type(exc).__name__, "message": str(exc)}},
        )

    @app.get("/healthz")
    async def healthz() -> dict[str, str]:
        return {"status": "ok"}

    @app.post("/validate", response_model=ValidateResponse)
    async def validate(req: ValidateRequest) -> ValidateResponse:
        notes: list[str] = []
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                model_from_dict(req.model)
            notes = [str(w.message) for w in caught]
        except MllpError as exc:
            return ValidateResponse(valid=False, errors=[str(exc)], warnings=[])
        return ValidateResponse(valid=True, errors=[], warnings=notes)

    @app.post("/check")
    async def check(req: CheckRequest) -> dict[str, Any]:
        model = model_from_dict(req.model)
        report = check_model(model, trials=req.trials, seed=req.seed)
        return check_to_dict(report)

    @app.post("/reconstruct")
    async def reconstruct(req: ReconstructRequest) -> dict[str, Any]:
        model = model_from_dict(req.model)
        result = run_pipeline(model, trials=req.trials, seed=req.seed, tol=req.tol)
        return pipeline_to_dict(result)

    @app.post("/matrices", response_model=MatricesResponse)
    async def matrices(req: MatricesRequest) -> MatricesResponse:
        if req.kind.upper() not in ("C", "G", "S", "SBAR"):
            raise ModelError(f"unknown matrix kind {req.kind!r}; use C, G, S or SBAR")
        header, rows, on_cols = matrix_table(req.levels, req.margin, req.kind, req.terms)
        return MatricesResponse(
            kind=req.kind.upper(), header=header, rows=rows, terms_on_columns=on_cols
        )

    return app


app = create_app()
