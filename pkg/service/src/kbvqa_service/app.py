"""The HTTP application: endpoints, capability gating, error mapping.

One service hosts every capability behind per-deployment flags.  Stub
mode answers everything in-process and deterministically; full mode is
the shell for real models, returning 503 for encoding until a model is
attached and 404 for clips absent from its feature store.  Request
validation failures surface as HTTP 400, capability gaps as 501.
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass, field

from fastapi import FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import encoder
from .features import (
    FEATURE_KINDS,
    FULL_FACE_VOCAB,
    IMAGE_FRAME_DIM,
    FeatureStore,
    STUB_CONCEPT_VOCAB,
    STUB_FACE_VOCAB,
    stub_payload,
)

MODES = ("stub", "full")
VOCAB_KINDS = ("concepts", "faces")
DEFAULT_FRAMES = 5

DETECTOR_THRESHOLDS = {"concepts": 0.2, "faces": 0.8}


@dataclass
class ServiceConfig:
    """One deployment's capabilities and data sources."""

    mode: str = "stub"
    feature_kinds: tuple[str, ...] = FEATURE_KINDS
    vocab_kinds: tuple[str, ...] = VOCAB_KINDS
    feature_store_path: str | None = None
    thresholds: dict = field(default_factory=lambda: dict(DETECTOR_THRESHOLDS))

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        unknown = set(self.feature_kinds) - set(FEATURE_KINDS)
        if unknown:
            raise ValueError(f"unknown feature kinds: {sorted(unknown)}")
        if self.mode == "full":
            # the concept vocabulary comes from a detector; none ships here
            self.vocab_kinds = tuple(
                k for k in self.vocab_kinds if k != "concepts"
            )

    @property
    def backend_id(self) -> str:
        if self.mode == "stub":
            return f"stub-reference-{encoder.DIM}"
        return "full-unloaded"

    def capabilities(self) -> dict:
        return {
            "dim": encoder.DIM,
            "modes": ["cls", "mean-word"],
            "feature_kinds": list(self.feature_kinds),
            "vocab_kinds": list(self.vocab_kinds),
            "image_frame_dim": IMAGE_FRAME_DIM,
            "n_f_default": DEFAULT_FRAMES,
            "detector_thresholds": dict(self.thresholds),
        }


class EncodeRequest(BaseModel):
    texts: list[str]
    mode: str = "cls"
    budget: int = 512


class FeaturesRequest(BaseModel):
    clip_ref: str
    kind: str
    n_f: int = DEFAULT_FRAMES


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"detail": message})


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    store = (
        FeatureStore.load(config.feature_store_path)
        if config.feature_store_path
        else FeatureStore.empty()
    )
    app = FastAPI(title="kbvqa model backend", version="0.1.0")

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return _error(400, f"malformed request: {exc.errors()[:3]}")

    @app.get("/healthz")
    def healthz():
        return {
            "status": "ok",
            "backend_id": config.backend_id,
            "capabilities": config.capabilities(),
        }

    @app.post("/encode")
    def encode(request: EncodeRequest):
        if not request.texts:
            return _error(400, "texts must be a non-empty list")
        if config.mode == "full":
            return _error(503, "contextual model not loaded in this deployment")
        try:
            vectors = encoder.encode_batch(
                request.texts, request.mode, request.budget
            )
        except encoder.EncodeError as exc:
            return _error(400, str(exc))
        return {
            "backend_id": config.backend_id,
            "dim": encoder.DIM,
            "vectors": [v.tolist() for v in vectors],
        }

    @app.post("/features")
    def features(request: FeaturesRequest):
        if request.kind not in FEATURE_KINDS:
            return _error(400, f"unknown feature kind {request.kind!r}")
        if request.kind not in config.feature_kinds:
            return _error(
                501, f"feature kind {request.kind!r} not deployed on this backend"
            )
        if not request.clip_ref.strip():
            return _error(400, "clip_ref must be non-empty")
        if request.n_f < 1:
            return _error(400, f"n_f must be positive, got {request.n_f}")
        if config.mode == "stub":
            data = stub_payload(request.clip_ref, request.kind, request.n_f)
        else:
            record = store.get(request.clip_ref, request.kind)
            if record is None:
                return _error(404, f"unknown clip {request.clip_ref!r}")
            data = record["data"]
        return {
            "clip_ref": request.clip_ref,
            "kind": request.kind,
            "n_f": request.n_f,
            "data": data,
        }

    @app.get("/vocab")
    def vocab(kind: str = Query(...)):
        if kind not in VOCAB_KINDS:
            return _error(400, f"unknown vocabulary kind {kind!r}")
        if kind not in config.vocab_kinds:
            return _error(
                501, f"vocabulary {kind!r} not deployed on this backend"
            )
        if config.mode == "stub":
            entries = STUB_CONCEPT_VOCAB if kind == "concepts" else STUB_FACE_VOCAB
        else:
            entries = FULL_FACE_VOCAB
        return {"kind": kind, "entries": list(entries)}

    return app


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kbvqa-service", description="Run the model-backend sidecar."
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8100)
    parser.add_argument("--mode", choices=MODES, default="stub")
    parser.add_argument(
        "--feature-store", default=None, help="JSONL of precomputed clip features"
    )
    args = parser.parse_args(argv)

    import uvicorn

    app = create_app(
        ServiceConfig(mode=args.mode, feature_store_path=args.feature_store)
    )
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    main()
