"""Read-only HTTP inference service for the explorer UI.

Images cross the wire as base64-encoded little-endian float32 rasters
(row-major) together with their dimensions.  The service never mutates the
loaded checkpoint; every request works on private buffers.
"""

from __future__ import annotations

import base64
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import atlas as atlas_mod
from . import generator as gen_mod
from . import tensor as T
from .checkpoint import checkpoint_digest
from .tensor import Tensor
from .trainer import standardize_batch


class ApiImage(BaseModel):
    width: int
    height: int
    channels: int
    encoding: str  # base64 of '<f4' raster, row-major


def encode_image(arr: np.ndarray) -> dict:
    if arr.ndim == 2:
        arr = arr[..., None]
    h, w, c = arr.shape
    payload = base64.b64encode(np.ascontiguousarray(arr, dtype="<f4").tobytes()).decode()
    return {"width": w, "height": h, "channels": c, "encoding": payload}


def decode_image(obj: ApiImage) -> np.ndarray:
    raw = base64.b64decode(obj.encoding)
    expected = obj.width * obj.height * obj.channels * 4
    if len(raw) != expected:
        raise HTTPException(
            status_code=400,
            detail=f"decoded payload is {len(raw)} bytes, expected {expected}",
        )
    return (
        np.frombuffer(raw, dtype="<f4")
        .reshape(obj.height, obj.width, obj.channels)
        .astype(np.float32)
    )


class SynthesizeRequest(BaseModel):
    label_id: str | None = None
    label: ApiImage | None = None
    style_id: int | None = None
    z_seed: int | None = None
    style: list[float] | None = None


class SegmentRequest(BaseModel):
    image: ApiImage


class InterpolateRequest(BaseModel):
    style_a: list[float]
    style_b: list[float]
    steps: int = 5
    label_id: str | None = None


def create_app(checkpoint_path, atlas_dir=None, ui_dir=None) -> FastAPI:
    app = FastAPI(title="manifold explorer service")
    models, state = atlas_mod.load_models(checkpoint_path)
    digest = checkpoint_digest(checkpoint_path)
    style_dim = int(state.meta.get("style_dim", 0))
    bundle = None
    if atlas_dir is not None and (Path(atlas_dir) / "index.jsonl").exists():
        bundle = atlas_mod.load_atlas(atlas_dir)

    @app.exception_handler(RequestValidationError)
    async def schema_violation(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    def labels_available() -> dict[str, np.ndarray]:
        if bundle is not None:
            return bundle["labels"]
        return {}

    def resolve_label(req_label_id, req_label) -> np.ndarray:
        if req_label is not None:
            label = decode_image(req_label)
            if not np.all(np.isin(np.unique(label), (0.0, 1.0))) or not np.allclose(
                label.sum(axis=-1), 1.0
            ):
                raise HTTPException(status_code=400, detail="label must be one-hot")
            return label
        labels = labels_available()
        label_id = req_label_id or "reference"
        if label_id not in labels:
            raise HTTPException(status_code=404, detail=f"unknown label id {label_id!r}")
        return labels[label_id]

    def resolve_style(req: SynthesizeRequest) -> np.ndarray:
        gen = models.generator
        if req.style is not None:
            style = np.asarray(req.style, dtype=np.float32).reshape(1, -1)
            if style.shape[1] != gen.cfg.style_dim:
                raise HTTPException(
                    status_code=400,
                    detail=f"style must have {gen.cfg.style_dim} entries",
                )
            return style
        if req.style_id is not None:
            if bundle is None:
                raise HTTPException(status_code=404, detail="no atlas loaded")
            for point in bundle["points"]:
                if point["id"] == req.style_id:
                    return np.asarray(point["style"], dtype=np.float32).reshape(1, -1)
            raise HTTPException(status_code=404, detail=f"unknown style id {req.style_id}")
        z_seed = req.z_seed if req.z_seed is not None else 0
        z = np.random.default_rng(z_seed).standard_normal((1, gen.cfg.noise_dim))
        with T.no_grad():
            return gen.map_noise(Tensor(z.astype(np.float32))).data

    def synthesize(label: np.ndarray, style: np.ndarray) -> np.ndarray:
        gen = models.generator
        if gen is None:
            raise HTTPException(status_code=404, detail="checkpoint has no generator")
        with T.no_grad():
            out = gen.synthesize(Tensor(label[None]), Tensor(style))
        return out.data[0]

    @app.get("/health")
    def health():
        return {"status": "ok", "checkpoint": digest, "style_dim": style_dim}

    @app.get("/manifold")
    def manifold(n: int = 64, seed: int = 0, method: str = "pca"):
        if bundle is not None:
            return [
                {k: p[k] for k in ("id", "u", "v", "cluster")} for p in bundle["points"]
            ]
        if method not in ("pca", "tsne"):
            raise HTTPException(status_code=400, detail="method must be pca or tsne")
        styles = atlas_mod.sample_styles(models, n, seed)
        proj = atlas_mod.project_2d(styles, method=method, seed=seed)
        clusters = atlas_mod.kmeans_2(proj.coords, seed=seed) if n >= 4 else [None] * n
        return [
            {
                "id": i,
                "u": float(proj.coords[i, 0]),
                "v": float(proj.coords[i, 1]),
                "cluster": None if clusters[i] is None else int(clusters[i]),
            }
            for i in range(n)
        ]

    @app.get("/labels")
    def labels():
        return [
            {"id": label_id, "preview": encode_image(label)}
            for label_id, label in labels_available().items()
        ]

    @app.post("/synthesize")
    def synthesize_endpoint(req: SynthesizeRequest):
        label = resolve_label(req.label_id, req.label)
        style = resolve_style(req)
        image = synthesize(label, style)
        return {
            "image": encode_image(image),
            "style": [float(x) for x in style.reshape(-1)],
        }

    @app.post("/segment")
    def segment_endpoint(req: SegmentRequest):
        image = decode_image(req.image)
        if image.shape[-1] != 1:
            raise HTTPException(status_code=400, detail="segment expects 1 channel")
        with T.no_grad():
            x = standardize_batch(Tensor(image[None]))
            pred, conf = models.discriminator.forward(x)
        return {
            "label": encode_image(pred.data[0]),
            "confidence": encode_image(conf.data[0]),
        }

    @app.post("/interpolate")
    def interpolate_endpoint(req: InterpolateRequest):
        if req.steps < 2:
            raise HTTPException(status_code=400, detail="steps must be >= 2")
        label = resolve_label(req.label_id, None)
        a = np.asarray(req.style_a, dtype=np.float32).reshape(1, -1)
        b = np.asarray(req.style_b, dtype=np.float32).reshape(1, -1)
        gen = models.generator
        if a.shape[1] != gen.cfg.style_dim or b.shape[1] != gen.cfg.style_dim:
            raise HTTPException(
                status_code=400, detail=f"styles must have {gen.cfg.style_dim} entries"
            )
        out = []
        for i in range(req.steps):
            t = i / (req.steps - 1)
            style = (1.0 - t) * a + t * b  # exactly linear in t
            out.append({"t": t, "image": encode_image(synthesize(label, style))})
        return {"steps": out}

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
