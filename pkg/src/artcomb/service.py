"""HTTP JSON API over a fitted model, plus static hosting for the explorer UI."""

from __future__ import annotations

import json
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .errors import ArtcombError, UnknownDrug
from .predict import FittedModel, Scenario, predict_scenario


class PredictRequest(BaseModel):
    covariates: list[float]
    candidate: str
    individual_id: str | None = None
    history: list[str] | None = None
    level: float = Field(default=0.95, gt=0.0, lt=1.0)
    seed: int = 0
    noise: str = "with_omega_eps"


def _json_response(payload: dict, status_code: int = 200) -> Response:
    # canonical serialization so identical requests yield identical bytes
    return Response(
        content=json.dumps(payload, sort_keys=True),
        status_code=status_code,
        media_type="application/json",
    )


def create_app(model: FittedModel, ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="combination-effect predictor", docs_url=None, redoc_url=None)

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return _json_response({"error": "malformed scenario", "detail": str(exc)}, 400)

    @app.exception_handler(UnknownDrug)
    async def unknown_drug(request: Request, exc: UnknownDrug):
        return _json_response({"error": "unknown drug", "code": exc.code}, 422)

    @app.exception_handler(ArtcombError)
    async def domain_error(request: Request, exc: ArtcombError):
        return _json_response({"error": type(exc).__name__, "detail": str(exc)}, 400)

    @app.get("/api/meta")
    def meta():
        chain = model.chain
        return _json_response(
            {
                "q": model.n_items,
                "s": model.n_covariates,
                "items": chain.item_names,
                "covariates": chain.covariate_names,
                "individuals": chain.individual_ids,
                "drugs": [
                    {"code": c, "class": k, "name": n} for c, k, n in model.dictionary.entries
                ],
                "representatives": [r.text() for r in model.basis.representatives.regimens],
                "eta": model.basis.kernel_cfg.eta,
                "match_mode": model.basis.kernel_cfg.match_mode,
                "kernel": model.basis.kernel,
                "n_draws": chain.n_draws,
                "max_candidates": 4,
            }
        )

    @app.get("/api/regimens")
    def regimens():
        by_class = model.dictionary.codes_by_class()
        return _json_response(
            {
                "drugs": [
                    {"code": c, "class": k, "name": n} for c, k, n in model.dictionary.entries
                ],
                "classes": [k for k in by_class if by_class[k]],
            }
        )

    @app.post("/api/predict")
    def predict(request: PredictRequest):
        scenario = Scenario(
            covariates=request.covariates,
            candidate=request.candidate,
            individual_id=request.individual_id,
            history=request.history,
            noise=request.noise,
        )
        prediction = predict_scenario(
            model, scenario, level=request.level, seed=request.seed
        )
        return _json_response(prediction.to_json())

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    return app


def serve(model: FittedModel, host: str = "127.0.0.1", port: int = 8000, ui_dir=None):
    """Run the prediction service until interrupted."""
    import uvicorn

    uvicorn.run(create_app(model, ui_dir=ui_dir), host=host, port=port, log_level="info")
