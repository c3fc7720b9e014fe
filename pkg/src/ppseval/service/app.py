"""HTTP service wrapping the run stages.

Stage endpoints execute synchronously and return file paths plus summary
counts; the files land on the service host's filesystem, so clients and
service are expected to share a machine or a mount. The CLI is a thin client
for these endpoints.
"""

import logging

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, pipeline
from ..config import load_config
from ..errors import HarnessError
from ..judging import PPSWeights
from ..strategies import StrategyKind
from .models import (
    HealthResponse,
    JudgeRequest,
    JudgeResponse,
    ReportRequest,
    ReportResponse,
    SolveRequest,
    SolveResponse,
    StatsRequest,
    StatsResponse,
)

logger = logging.getLogger(__name__)


def create_app() -> FastAPI:
    app = FastAPI(title="ppseval", version=__version__)

    @app.exception_handler(HarnessError)
    async def harness_error_handler(request: Request, exc: HarnessError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/healthz", response_model=HealthResponse)
    def healthz():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/solve", response_model=SolveResponse)
    def solve(request: SolveRequest):
        config = load_config(request.config_path)
        try:
            strategy = StrategyKind(request.strategy)
        except ValueError:
            raise HarnessError(
                f"unknown strategy {request.strategy!r} "
                f"(expected one of {[s.value for s in StrategyKind]})"
            ) from None
        outcome = pipeline.solve_stage(
            config,
            strategy,
            limit=request.limit,
            category=request.category,
            tier=request.tier,
            mock_script=request.mock_script,
            output_path=request.output_path,
            dataset_path=request.dataset,
        )
        return SolveResponse(**outcome.__dict__)

    @app.post("/judge", response_model=JudgeResponse)
    def judge(request: JudgeRequest):
        config = load_config(request.config_path)
        outcome = pipeline.judge_stage(
            config,
            request.attempts_path,
            mock_script=request.mock_script,
            output_path=request.output_path,
            dataset_path=request.dataset,
        )
        return JudgeResponse(**outcome.__dict__)

    @app.post("/report", response_model=ReportResponse)
    def report(request: ReportRequest):
        alpha = request.alpha
        weights: PPSWeights | None = None
        dataset = request.dataset
        if request.config_path:
            config = load_config(request.config_path)
            weights = config.pps_weights
            dataset = dataset or config.dataset
            if alpha is None:
                alpha = config.alpha
        if dataset is None:
            raise HarnessError("report needs a dataset path (request field or config)")
        outcome = pipeline.report_stage(
            request.evaluations_paths,
            output_dir=request.output_dir,
            dataset_path=dataset,
            baseline=request.baseline,
            alpha=alpha if alpha is not None else 0.05,
            weights=weights,
        )
        return ReportResponse(**outcome.__dict__)

    @app.post("/stats", response_model=StatsResponse)
    def stats(request: StatsRequest):
        outcome = pipeline.stats_stage(request.dataset)
        return StatsResponse(
            record_count=outcome.record_count,
            fields={name: s.__dict__ for name, s in outcome.fields.items()},
            categories=outcome.categories,
            text=outcome.text,
        )

    return app
