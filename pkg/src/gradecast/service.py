"""Read-only HTTP JSON API over a trained model registry.

Endpoints: GET /health, GET /models, POST /predict, POST /explain,
POST /whatif. Responses are reproducible: unless a request carries an
explicit seed, the MC seed is derived from a hash of the request body, so
identical requests always return identical numbers.
"""

from __future__ import annotations

import hashlib
import json
import os
from typing import List, Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import explain as explain_mod
from . import models, uncertainty
from .errors import GradecastError
from .grades import clip_grade, numeric_to_nearest_letter
from .metrics import AT_RISK_THRESHOLD


class TranscriptRow(BaseModel):
    course: str
    term: int = Field(ge=0)
    grade: float = Field(ge=0.0, le=4.0)


class PredictRequest(BaseModel):
    transcript: List[TranscriptRow]
    target: str
    family: str = "MLP"
    alpha: float = Field(default=0.95, gt=0.0, lt=1.0)
    samples: int = Field(default=uncertainty.DEFAULT_SAMPLES, ge=2, le=10_000)
    seed: Optional[int] = None


class ExplainRequest(BaseModel):
    transcript: List[TranscriptRow]
    target: str
    family: str = "MLP"
    k: int = Field(default=5, ge=1)


class Override(BaseModel):
    course: str
    new_grade: float = Field(ge=0.0, le=4.0)


class WhatIfRequest(BaseModel):
    transcript: List[TranscriptRow]
    target: str
    overrides: List[Override] = ()
    family: str = "MLP"
    alpha: float = Field(default=0.95, gt=0.0, lt=1.0)
    samples: int = Field(default=uncertainty.DEFAULT_SAMPLES, ge=2, le=10_000)
    seed: Optional[int] = None


def _error(status, code, detail):
    return JSONResponse(status_code=status,
                        content={"error": code, "detail": detail})


def request_seed(payload: BaseModel):
    """Deterministic seed from the canonical JSON of a request body."""
    blob = json.dumps(payload.model_dump(), sort_keys=True).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:4], "big")


def create_app(registry_dir, default_samples=uncertainty.DEFAULT_SAMPLES,
               tau_inv=None, ui_dir=None):
    registry = models.load_registry(registry_dir)
    if tau_inv is None:
        tau_path = os.path.join(registry_dir, "tau.json")
        if os.path.exists(tau_path):
            with open(tau_path, "r", encoding="utf-8") as fh:
                tau_inv = float(json.load(fh)["tau_inv"])
        else:
            tau_inv = 0.0

    app = FastAPI(title="gradecast", docs_url=None, redoc_url=None)

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return _error(422, "invalid_request", str(exc.errors()[:3]))

    def lookup(target, family):
        arts = registry.get(target)
        if arts is None:
            return None, _error(404, "unknown_course",
                                f"no models registered for {target!r}")
        art = arts.get(family)
        if art is None:
            return None, _error(404, "unknown_family",
                                f"no {family} artifact for {target!r}")
        return art, None

    def build_example(art, transcript, target):
        rows = [(r.course, r.term, r.grade) for r in transcript]
        example = models.make_example(rows, list(art.prior_courses), target)
        if not example.taken:
            return None, _error(422, "empty_prior_history",
                                "transcript covers none of the prior courses "
                                f"of {target!r}")
        return example, None

    def mc_summary(art, example, alpha, samples, seed):
        dist = uncertainty.predict_mc(art, example, n_samples=samples,
                                      tau_inv=tau_inv, seed=seed)
        iv = uncertainty.interval(dist, alpha)
        mean_clipped = clip_grade(dist.mean)
        return dist, {
            "mean": dist.mean,
            "variance": dist.variance,
            "interval": {"level": alpha, "lower": iv.lower, "upper": iv.upper},
            "letter": numeric_to_nearest_letter(mean_clipped),
            "at_risk": bool(mean_clipped < AT_RISK_THRESHOLD),
        }

    @app.get("/health")
    def health():
        return {"status": "ok",
                "tau_inv": tau_inv,
                "n_courses": len(registry),
                "models": {course: sorted(fams) for course, fams
                           in sorted(registry.items())}}

    @app.get("/models")
    def list_models():
        return {"models": [
            {"course": course,
             "families": sorted(fams),
             "priors": list(next(iter(fams.values())).prior_courses)}
            for course, fams in sorted(registry.items())]}

    @app.post("/predict")
    def predict(req: PredictRequest):
        art, err = lookup(req.target, req.family)
        if err:
            return err
        example, err = build_example(art, req.transcript, req.target)
        if err:
            return err
        seed = req.seed if req.seed is not None else request_seed(req)
        try:
            _, summary = mc_summary(art, example, req.alpha, req.samples, seed)
        except GradecastError as exc:
            return _error(422, "prediction_failed", str(exc))
        summary["seed"] = seed
        return summary

    @app.post("/explain")
    def explain(req: ExplainRequest):
        art, err = lookup(req.target, req.family)
        if err:
            return err
        example, err = build_example(art, req.transcript, req.target)
        if err:
            return err
        try:
            report = explain_mod.influence_student(art, example, top_k=req.k)
        except GradecastError as exc:
            return _error(422, "explain_failed", str(exc))
        return report.as_dict()

    @app.post("/whatif")
    def whatif(req: WhatIfRequest):
        art, err = lookup(req.target, req.family)
        if err:
            return err
        example, err = build_example(art, req.transcript, req.target)
        if err:
            return err
        for ov in req.overrides:
            if ov.course not in example.taken:
                return _error(422, "override_untaken",
                              f"override references {ov.course!r}, which the "
                              "transcript does not cover")
        cf_example = example
        for ov in req.overrides:
            cf_example = explain_mod.counterfactual_example(
                cf_example, ov.course, ov.new_grade)
        # Base and counterfactual share one seed so the delta reflects the
        # override alone, not resampled dropout masks.
        seed = req.seed if req.seed is not None else request_seed(req)
        try:
            _, base = mc_summary(art, example, req.alpha, req.samples, seed)
            _, counterfactual = mc_summary(art, cf_example, req.alpha,
                                           req.samples, seed)
        except GradecastError as exc:
            return _error(422, "prediction_failed", str(exc))
        return {"base": base, "counterfactual": counterfactual,
                "delta": counterfactual["mean"] - base["mean"],
                "seed": seed}

    if ui_dir:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
