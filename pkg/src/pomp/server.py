"""HTTP prediction service: one immutable model loaded at startup, shared by
stateless request handlers.

Endpoints: POST /predict (PredictRequest -> PredictResponse), GET /taxonomy,
GET /health.  Invalid bodies return 400 with field-level messages; bodies
over 64 KiB return 413.
"""

from __future__ import annotations

from typing import Literal

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .data import PatientRecord
from .model import ModelParams, predict_full, rank_descending

MAX_BODY_BYTES = 64 * 1024


class PredictRequest(BaseModel):
    """One consultation to classify; mirrors the dataset record schema minus
    the gold labels.  Every field is optional server-side."""

    chronic: str = ""
    surgery: str = ""
    therapy: str = ""
    usage: str = ""
    symptom: str = ""
    allergy: str = ""
    age: float | None = Field(default=None, ge=0, allow_inf_nan=False)
    height: float | None = Field(default=None, ge=0, allow_inf_nan=False)
    weight: float | None = Field(default=None, ge=0, allow_inf_nan=False)
    duration: float | None = Field(default=None, ge=0, allow_inf_nan=False)
    gender: Literal["female", "male"] = "female"
    pregnancy: Literal["not_pregnant", "pregnant", "unknown"] = "unknown"
    top_k_categories: int = Field(default=3, ge=1)
    top_k_diseases: int = Field(default=10, ge=1)

    def to_record(self) -> PatientRecord:
        return PatientRecord(
            text_chronic=self.chronic,
            text_surgery=self.surgery,
            text_therapy=self.therapy,
            text_usage=self.usage,
            text_symptom=self.symptom,
            text_allergy=self.allergy,
            age=self.age,
            height=self.height,
            weight=self.weight,
            duration=self.duration,
            gender=self.gender,
            pregnancy=self.pregnancy,
        )


class RankedCategory(BaseModel):
    category: str
    probability: float


class RankedDisease(BaseModel):
    disease: str
    probability: float


class CompositeScore(BaseModel):
    disease: str
    score: float


class PredictResponse(BaseModel):
    categories: list[RankedCategory]
    selected_category: str
    diseases: list[RankedDisease]
    composite: list[CompositeScore]
    model_version: str


def build_predict_response(model: ModelParams, request: PredictRequest) -> PredictResponse:
    """Shared by the HTTP handler and the CLI predict subcommand so both
    produce identical rankings for identical inputs."""
    taxonomy = model.taxonomy
    prediction = predict_full(request.to_record(), model)
    cat_order = rank_descending(prediction.category_probs)[: request.top_k_categories]
    categories = [
        RankedCategory(
            category=taxonomy.categories[i],
            probability=float(prediction.category_probs[i]),
        )
        for i in cat_order
    ]
    subset = taxonomy.membership[prediction.selected_category]
    dise_order = rank_descending(prediction.disease_probs)[: request.top_k_diseases]
    diseases = [
        RankedDisease(disease=subset[i], probability=float(prediction.disease_probs[i]))
        for i in dise_order
    ]
    comp_order = rank_descending(prediction.composite_scores)[: request.top_k_diseases]
    composite = [
        CompositeScore(
            disease=taxonomy.diseases[i], score=float(prediction.composite_scores[i])
        )
        for i in comp_order
    ]
    return PredictResponse(
        categories=categories,
        selected_category=prediction.selected_category,
        diseases=diseases,
        composite=composite,
        model_version=model.version,
    )


def create_app(model: ModelParams, cors: bool = False) -> FastAPI:
    """Application factory over one immutable, already-loaded model."""
    app = FastAPI(title="pomp", version=model.version)

    if cors:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(
            CORSMiddleware,
            allow_origins=["*"],
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        details = [
            {
                "field": ".".join(str(part) for part in err["loc"] if part != "body"),
                "message": err["msg"],
            }
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"detail": details})

    @app.middleware("http")
    async def limit_body_size(request: Request, call_next):
        if request.method == "POST":
            body = await request.body()
            if len(body) > MAX_BODY_BYTES:
                return JSONResponse(
                    status_code=413,
                    content={"detail": f"body exceeds {MAX_BODY_BYTES} bytes"},
                )
        return await call_next(request)

    @app.post("/predict", response_model=PredictResponse)
    def predict(request: PredictRequest) -> PredictResponse:
        return build_predict_response(model, request)

    @app.get("/taxonomy")
    def taxonomy() -> dict:
        return model.taxonomy.to_dict()

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "model_version": model.version}

    return app
