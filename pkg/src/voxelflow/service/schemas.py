"""Pydantic request and response models for the service endpoints."""

from __future__ import annotations

from pydantic import BaseModel, Field


class InspectRequest(BaseModel):
    catalog_path: str
    modalities: list[str]
    ns: list[int] | None = None


class InspectResponse(BaseModel):
    consistent: bool
    flags: list[dict]
    records: list[dict]
    voxel_size_stats: dict
    text: str


class StatsRequest(BaseModel):
    catalog_path: str
    modality: str
    n: int | None = None


class StatsResponse(BaseModel):
    mean: float
    std: float


class RunRequest(BaseModel):
    pipeline_path: str
    catalog_path: str
    identifier: str = Field(description="dataset_id/case_id/record_id")
    output_set: str
    out_dir: str
    seed: int | None = None


class RunResponse(BaseModel):
    steps: int
    files: list[str]


class SummaryRequest(BaseModel):
    pipeline_path: str


class SummaryResponse(BaseModel):
    summary: str


class NetshapeRequest(BaseModel):
    arch_path: str
    input_size: list[int] | None = None
    size_range: tuple[int, int] = (1, 128)


class NetshapeResponse(BaseModel):
    receptive_field: list[int]
    output_size: list[int] | None
    admissible: list[tuple[list[int], list[int]]]
