"""FastAPI service wrapping the pipeline engine.

Endpoints take server-local paths, so the service is stateless: catalogs
and pipelines are parsed per request.  Errors map to status codes the CLI
translates into its exit-code contract: 400 for unusable input (parse
failures, unknown sets, unresolved identifiers), 424 for an unattached
model reference.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException

from ..catalog import load_catalog_file
from ..errors import AdmissibilityError, FormatError, StateError, VoxelflowError
from ..netshape import admissible_input_sizes, load_arch_file, output_size, receptive_field
from ..nifti import write_nifti
from ..pipeline_file import load_pipeline_file
from ..sampling import CatalogIdentifier
from .schemas import (
    InspectRequest,
    InspectResponse,
    NetshapeRequest,
    NetshapeResponse,
    RunRequest,
    RunResponse,
    StatsRequest,
    StatsResponse,
    SummaryRequest,
    SummaryResponse,
)


def _bad_request(exc) -> HTTPException:
    return HTTPException(status_code=400, detail=str(exc))


def _load_catalog(path: str):
    try:
        return load_catalog_file(path)
    except (OSError, FormatError) as exc:
        raise _bad_request(exc)


def _load_pipeline(path: str, seed=None):
    try:
        return load_pipeline_file(path, seed=seed)
    except (OSError, FormatError) as exc:
        raise _bad_request(exc)


def run_pipeline(request: RunRequest) -> RunResponse:
    """Evaluate one named output set for one identifier and write every
    emitted batch element as a NIfTI volume named
    ``<set>_<step>_<slot>.nii.gz`` (the slot index runs over samples and
    their batch elements within a step)."""
    bundle = _load_pipeline(request.pipeline_path, seed=request.seed)
    mirc = _load_catalog(request.catalog_path)
    parts = request.identifier.split("/")
    if len(parts) != 3:
        raise _bad_request(
            f"identifier must be dataset_id/case_id/record_id, got {request.identifier!r}"
        )
    try:
        identifier = CatalogIdentifier(mirc, *parts)
    except KeyError as exc:
        raise _bad_request(f"identifier does not resolve: {exc}")
    try:
        creator = bundle.creator(request.output_set)
    except KeyError as exc:
        raise _bad_request(exc.args[0])

    out_dir = Path(request.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    steps = 0
    try:
        for step, outputs in enumerate(creator.eval(identifier)):
            steps += 1
            slot = 0
            for value in outputs:
                for sample in value:
                    for b in range(sample.batch_size):
                        name = f"{request.output_set}_{step:04d}_{slot:04d}.nii.gz"
                        data = sample.data[b]
                        if data.shape[-1] == 1:
                            data = data[..., 0]
                        write_nifti(out_dir / name, data, sample.affine[b])
                        files.append(name)
                        slot += 1
    except StateError as exc:
        raise HTTPException(status_code=424, detail=str(exc))
    except (KeyError, VoxelflowError) as exc:
        raise _bad_request(exc)
    return RunResponse(steps=steps, files=files)


def create_app() -> FastAPI:
    app = FastAPI(title="voxelflow", version="0.1.0")

    @app.post("/catalog/inspect", response_model=InspectResponse)
    def inspect(request: InspectRequest) -> InspectResponse:
        mirc = _load_catalog(request.catalog_path)
        try:
            report = mirc.inspect(request.modalities, ns=request.ns)
        except (ValueError, KeyError, VoxelflowError, OSError) as exc:
            raise _bad_request(exc)
        payload = report.to_dict()
        return InspectResponse(text=report.format(), **payload)

    @app.post("/catalog/stats", response_model=StatsResponse)
    def stats(request: StatsRequest) -> StatsResponse:
        mirc = _load_catalog(request.catalog_path)
        try:
            mean, std = mirc.mean_and_std(request.modality, n=request.n)
        except (KeyError, VoxelflowError, OSError) as exc:
            raise _bad_request(exc)
        return StatsResponse(mean=mean, std=std)

    @app.post("/pipeline/run", response_model=RunResponse)
    def run(request: RunRequest) -> RunResponse:
        return run_pipeline(request)

    @app.post("/pipeline/summary", response_model=SummaryResponse)
    def summary(request: SummaryRequest) -> SummaryResponse:
        bundle = _load_pipeline(request.pipeline_path)
        return SummaryResponse(summary=bundle.whole_creator().summary())

    @app.post("/netshape", response_model=NetshapeResponse)
    def netshape(request: NetshapeRequest) -> NetshapeResponse:
        try:
            cfg = load_arch_file(request.arch_path)
        except (OSError, FormatError) as exc:
            raise _bad_request(exc)
        out = None
        if request.input_size is not None:
            if len(request.input_size) != 3:
                raise _bad_request("input_size must be a triple")
            try:
                out = list(output_size(cfg, request.input_size))
            except AdmissibilityError as exc:
                raise _bad_request(exc)
        lo, hi = request.size_range
        return NetshapeResponse(
            receptive_field=list(receptive_field(cfg)),
            output_size=out,
            admissible=[
                (list(i), list(o)) for i, o in admissible_input_sizes(cfg, (lo, hi))
            ],
        )

    return app


app = create_app()
