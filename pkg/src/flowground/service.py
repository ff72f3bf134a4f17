"""HTTP service wrapping the grounding pipeline.

Request/response bodies are pydantic models; every endpoint operates on
bundle directories that the server process can read. Run with
`uvicorn flowground.service:app`.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .bundle import Bundle, BundleSpec, generate_synthetic_bundle
from .config import PipelineConfig
from .errors import FlowgroundError, MissingInput, SpecInvalid
from .fileio import read_grasps
from .grasp import SceneCloud, rank_grasps
from .pipeline import (
    _bundle_camera,
    calibrate_bundle_depth,
    metric_flow,
    run_pipeline,
)

app = FastAPI(title="flowground", version="1.0.0")


class BundleRequest(BaseModel):
    bundle_dir: str
    config_path: str | None = None
    seed: int | None = None


class RunRequest(BundleRequest):
    trajectory_path: str | None = None


class SynthRequest(BaseModel):
    spec_path: str
    output_dir: str
    seed: int | None = None


class DepthModelResponse(BaseModel):
    scale: float
    shift: float
    inlier_count: int
    inlier_ratio: float


class GraspScoreModel(BaseModel):
    index: int
    confidence: float
    support: float
    total: float


class RankResponse(BaseModel):
    ranking: list[GraspScoreModel]


class SynthResponse(BaseModel):
    bundle_dir: str


def _config(req: BundleRequest) -> PipelineConfig:
    try:
        config = PipelineConfig.load(req.config_path) if req.config_path \
            else PipelineConfig()
    except (OSError, ValueError, json.JSONDecodeError) as e:
        raise HTTPException(status_code=400, detail=str(e))
    if req.seed is not None:
        config.seed = req.seed
    return config


@app.get("/health")
def health() -> dict:
    return {"status": "ok"}


@app.post("/synth", response_model=SynthResponse)
def synth(req: SynthRequest):
    try:
        spec = BundleSpec.load(req.spec_path)
        out = generate_synthetic_bundle(spec, req.output_dir, seed=req.seed)
    except (SpecInvalid, MissingInput, OSError, json.JSONDecodeError) as e:
        raise HTTPException(status_code=400, detail=str(e))
    return SynthResponse(bundle_dir=str(out))


@app.post("/calibrate-depth", response_model=DepthModelResponse)
def calibrate(req: BundleRequest):
    config = _config(req)
    try:
        model, _ = calibrate_bundle_depth(Bundle.load(req.bundle_dir), config)
    except (MissingInput, ValueError) as e:
        raise HTTPException(status_code=400, detail=str(e))
    except FlowgroundError as e:
        raise HTTPException(status_code=422, detail=str(e))
    return DepthModelResponse(scale=model.scale, shift=model.shift,
                              inlier_count=model.inlier_count,
                              inlier_ratio=model.inlier_ratio)


@app.post("/rank-grasps", response_model=RankResponse)
def rank(req: BundleRequest):
    config = _config(req)
    try:
        bundle = Bundle.load(req.bundle_dir)
        camera = _bundle_camera(bundle, config)
        model, _ = calibrate_bundle_depth(bundle, config)
        flow = metric_flow(bundle, model, camera)
        candidates = read_grasps(bundle.path("grasps"))
        contact_points = flow.positions[flow.validity[:, 0], 0]
        ranking = rank_grasps(candidates, flow.positions[:, 0], contact_points,
                              SceneCloud(np.zeros((0, 3)), np.zeros(0, dtype=int)),
                              max_dist=config.contact_max_dist,
                              clearance=config.collision_clearance,
                              band=config.support_band)
    except (MissingInput, ValueError) as e:
        raise HTTPException(status_code=400, detail=str(e))
    except FlowgroundError as e:
        raise HTTPException(status_code=422, detail=str(e))
    return RankResponse(ranking=[
        GraspScoreModel(index=s.index, confidence=s.candidate.confidence,
                        support=s.support, total=s.total) for s in ranking])


@app.post("/run")
def run(req: RunRequest) -> dict:
    config = _config(req)
    if not Path(req.bundle_dir).is_dir():
        raise HTTPException(status_code=400,
                            detail=f"no such bundle directory: {req.bundle_dir}")
    try:
        return run_pipeline(config, req.bundle_dir, req.trajectory_path)
    except (MissingInput, ValueError, json.JSONDecodeError) as e:
        raise HTTPException(status_code=400, detail=str(e))
    except FlowgroundError as e:
        raise HTTPException(status_code=422, detail=str(e))
