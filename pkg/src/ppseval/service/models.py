"""Pydantic request/response models for the HTTP service."""

from typing import Optional

from pydantic import BaseModel, Field


class SolveRequest(BaseModel):
    config_path: str
    strategy: str
    limit: Optional[int] = None
    category: Optional[str] = None
    tier: Optional[str] = None
    mock_script: Optional[str] = None
    output_path: Optional[str] = None
    dataset: Optional[str] = None


class SolveResponse(BaseModel):
    attempts_path: str
    completed: int
    failed: int
    skipped: int
    completions_issued: int
    transcript_path: str
    failures_path: Optional[str] = None


class JudgeRequest(BaseModel):
    config_path: str
    attempts_path: str
    mock_script: Optional[str] = None
    output_path: Optional[str] = None
    dataset: Optional[str] = None


class JudgeResponse(BaseModel):
    evaluations_path: str
    judged: int
    failed: int
    skipped: int
    coverage: float
    failures_path: Optional[str] = None


class ReportRequest(BaseModel):
    evaluations_paths: list[str] = Field(min_length=1)
    output_dir: str
    dataset: Optional[str] = None
    config_path: Optional[str] = None
    baseline: Optional[str] = None
    alpha: Optional[float] = None


class ReportResponse(BaseModel):
    tier_table_csv_path: str
    tier_table_text: str
    category_summary_csv_path: str
    category_summary_text: str
    significance_csv_path: Optional[str] = None
    significance_text: Optional[str] = None
    comparisons: int


class StatsRequest(BaseModel):
    dataset: str


class FieldStats(BaseModel):
    mean: float
    median: float
    std: float
    min: float
    max: float
    count: int


class StatsResponse(BaseModel):
    record_count: int
    fields: dict[str, FieldStats]
    categories: dict[str, int]
    text: str


class HealthResponse(BaseModel):
    status: str
    version: str
