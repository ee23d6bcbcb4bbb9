"""Manifold atlas: style samples from a trained mapping, 2-D projection
(PCA by default, t-SNE to match the interactive figure), diversity statistics
over rendered thumbnails, and a file bundle consumed by plotting and the
explorer service."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import phantoms
from . import tensor as T
from .checkpoint import CheckpointState, checkpoint_digest, load_checkpoint
from .tensor import Tensor
from .trainer import Models, restore_models


@dataclass
class ManifoldSample:
    id: int
    z: np.ndarray  # 1,L noise draw
    style: np.ndarray  # 1,P mapped style
    thumbnail: np.ndarray  # H,W,1 rendered with the shared reference label
    proj: tuple[float, float] | None = None
    cluster: int | None = None


@dataclass
class ProjectionResult:
    coords: np.ndarray  # n,2 rescaled to [-1, 1]^2
    method: str
    components: np.ndarray | None = None  # PCA only
    explained_variance: np.ndarray | None = None  # PCA only
    degenerate: bool = False


def load_models(checkpoint_path) -> tuple[Models, CheckpointState]:
    state = load_checkpoint(checkpoint_path)
    models, _ = restore_models(state)
    return models, state


def sample_manifold(
    source, n: int, seed: int, reference_label: np.ndarray
) -> list[ManifoldSample]:
    """Draw n noise vectors, map them to styles, and render each against the
    one shared reference label map."""
    if n < 2:
        raise ValueError("need at least 2 manifold samples")
    models = source if isinstance(source, Models) else load_models(source)[0]
    gen = models.generator
    if gen is None or gen.mapping is None:
        raise ValueError("checkpoint has no manifold mapping to sample")
    if reference_label.ndim != 3 or reference_label.shape[-1] != gen.cfg.label_channels:
        raise ValueError(
            f"reference label must be H,W,{gen.cfg.label_channels}, "
            f"got {reference_label.shape}"
        )
    rng = np.random.default_rng(seed)
    label_t = Tensor(reference_label[None].astype(np.float32))
    samples = []
    with T.no_grad():
        for i in range(n):
            z = rng.standard_normal((1, gen.cfg.noise_dim)).astype(np.float32)
            style = gen.map_noise(Tensor(z))
            thumb = gen.synthesize(label_t, style)
            samples.append(
                ManifoldSample(
                    id=i, z=z, style=style.data.copy(), thumbnail=thumb.data[0].copy()
                )
            )
    return samples


def sample_styles(models: Models, n: int, seed: int) -> np.ndarray:
    """n mapped style vectors without rendering thumbnails."""
    gen = models.generator
    if gen is None or gen.mapping is None:
        raise ValueError("checkpoint has no manifold mapping to sample")
    rng = np.random.default_rng(seed)
    styles = []
    with T.no_grad():
        for _ in range(n):
            z = rng.standard_normal((1, gen.cfg.noise_dim)).astype(np.float32)
            styles.append(gen.map_noise(Tensor(z)).data.reshape(-1))
    return np.asarray(styles)


def _rescale_unit_box(coords: np.ndarray) -> tuple[np.ndarray, bool]:
    out = np.zeros_like(coords)
    degenerate = False
    for axis in range(coords.shape[1]):
        lo, hi = coords[:, axis].min(), coords[:, axis].max()
        if hi - lo < 1e-12:
            degenerate = True
            continue
        out[:, axis] = 2.0 * (coords[:, axis] - lo) / (hi - lo) - 1.0
    return out, degenerate


def project_2d(styles, method: str = "pca", seed: int = 0) -> ProjectionResult:
    """Project style vectors onto the plane; coordinates land in [-1, 1]^2."""
    mat = np.asarray(
        [s.reshape(-1) for s in styles] if isinstance(styles, (list, tuple)) else styles,
        dtype=np.float64,
    )
    n = mat.shape[0]
    if method == "pca":
        if n < 2:
            raise ValueError("pca projection needs at least 2 styles")
        centered = mat - mat.mean(axis=0, keepdims=True)
        if np.abs(centered).max() < 1e-12:
            return ProjectionResult(
                coords=np.zeros((n, 2)), method="pca", degenerate=True
            )
        _, svals, vt = np.linalg.svd(centered, full_matrices=False)
        components = vt[:2]
        raw = centered @ components.T
        if raw.shape[1] < 2:  # rank-1 style set
            raw = np.column_stack([raw[:, 0], np.zeros(n)])
            components = np.vstack([components, np.zeros_like(components[0])])
        explained = (svals**2) / max(n - 1, 1)
        coords, degenerate = _rescale_unit_box(raw)
        return ProjectionResult(
            coords=coords,
            method="pca",
            components=components,
            explained_variance=explained[:2],
            degenerate=degenerate,
        )
    if method == "tsne":
        if n < 3:
            raise ValueError("tsne projection needs at least 3 styles")
        from sklearn.manifold import TSNE

        perplexity = max(1.0, min(30.0, n / 4))
        raw = TSNE(
            n_components=2, perplexity=perplexity, random_state=seed, init="pca"
        ).fit_transform(mat)
        coords, degenerate = _rescale_unit_box(raw.astype(np.float64))
        return ProjectionResult(coords=coords, method="tsne", degenerate=degenerate)
    raise ValueError(f"unknown projection method {method!r}")


@dataclass
class DiversityStats:
    mean_mse: float
    min_mse: float
    histogram: tuple[np.ndarray, np.ndarray]  # counts, bin edges


def diversity_stats(samples) -> DiversityStats:
    """Pairwise thumbnail MSE statistics over a sample list."""
    thumbs = [
        s.thumbnail if isinstance(s, ManifoldSample) else np.asarray(s) for s in samples
    ]
    if len(thumbs) < 2:
        raise ValueError("diversity statistics need at least 2 samples")
    values = []
    for i in range(len(thumbs)):
        for j in range(i + 1, len(thumbs)):
            diff = thumbs[i].astype(np.float64) - thumbs[j].astype(np.float64)
            values.append(float((diff * diff).mean()))
    values = np.asarray(values)
    counts, edges = np.histogram(values, bins=10)
    return DiversityStats(float(values.mean()), float(values.min()), (counts, edges))


def kmeans_2(coords: np.ndarray, seed: int = 0, restarts: int = 8, iters: int = 50) -> np.ndarray:
    """Plain 2-means on projected coordinates; best inertia over restarts."""
    coords = np.asarray(coords, dtype=np.float64)
    rng = np.random.default_rng(seed)
    best_labels, best_inertia = None, np.inf
    for _ in range(restarts):
        centers = coords[rng.choice(len(coords), size=2, replace=False)]
        for _ in range(iters):
            dist = ((coords[:, None, :] - centers[None]) ** 2).sum(axis=2)
            labels = dist.argmin(axis=1)
            new_centers = np.array(
                [
                    coords[labels == k].mean(axis=0) if (labels == k).any() else centers[k]
                    for k in range(2)
                ]
            )
            if np.allclose(new_centers, centers):
                break
            centers = new_centers
        inertia = ((coords - centers[labels]) ** 2).sum()
        if inertia < best_inertia:
            best_inertia, best_labels = inertia, labels.copy()
    return best_labels


def export_atlas(
    samples: list[ManifoldSample],
    out_dir,
    reference_label: np.ndarray,
    meta: dict | None = None,
) -> Path:
    """Write index.jsonl + per-sample PNG (display) and GPH (exact) thumbnails."""
    for s in samples:
        if s.proj is None:
            raise ValueError("projections must be computed before export")
    out = Path(out_dir)
    thumbs = out / "thumbs"
    thumbs.mkdir(parents=True, exist_ok=True)
    index_path = out / "index.jsonl"
    with open(index_path, "w") as fh:
        for s in samples:
            png = thumbs / f"{s.id}.png"
            gph = thumbs / f"{s.id}.gph"
            Image.fromarray(
                (np.clip(s.thumbnail[..., 0], 0, 1) * 255).astype(np.uint8), mode="L"
            ).save(png)
            phantoms.write_pair(
                gph,
                phantoms.LabeledPair(
                    image=s.thumbnail.astype(np.float32),
                    label=reference_label.astype(np.float32),
                    meta={"sample_id": s.id},
                ),
            )
            fh.write(
                json.dumps(
                    {
                        "id": s.id,
                        "u": s.proj[0],
                        "v": s.proj[1],
                        "cluster": s.cluster,
                        "style": [float(x) for x in s.style.reshape(-1)],
                    }
                )
                + "\n"
            )
    phantoms.write_pair(
        out / "reference_label.gph",
        phantoms.LabeledPair(
            image=np.zeros(reference_label.shape[:2] + (1,), np.float32),
            label=reference_label.astype(np.float32),
            meta={"role": "atlas reference label"},
        ),
    )
    (out / "atlas.json").write_text(json.dumps(meta or {}, indent=1))
    return index_path


def export_labels(pairs, out_dir) -> None:
    """Label maps offered to the explorer as synthesis references."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, pair in enumerate(pairs):
        phantoms.write_pair(
            out / f"label_{i:03d}.gph",
            phantoms.LabeledPair(
                image=np.zeros(pair.label.shape[:2] + (1,), np.float32),
                label=pair.label.astype(np.float32),
                meta={"role": "reference label", "seed": pair.meta.get("seed")},
            ),
        )


def load_atlas(atlas_dir) -> dict:
    out = Path(atlas_dir)
    points = [json.loads(line) for line in (out / "index.jsonl").read_text().splitlines()]
    meta = json.loads((out / "atlas.json").read_text())
    reference = phantoms.read_pair(out / "reference_label.gph")
    labels = {"reference": reference.label}
    labels_dir = out / "labels"
    if labels_dir.is_dir():
        for path in sorted(labels_dir.glob("*.gph")):
            labels[path.stem] = phantoms.read_pair(path).label
    return {
        "points": points,
        "meta": meta,
        "reference_label": reference.label,
        "labels": labels,
    }


def build_atlas(
    checkpoint_path,
    out_dir,
    n: int,
    seed: int,
    method: str,
    reference_label: np.ndarray,
    cluster: bool = True,
) -> Path:
    """Sample, project, (optionally) cluster, and export in one call."""
    models, state = load_models(checkpoint_path)
    samples = sample_manifold(models, n, seed, reference_label)
    proj = project_2d([s.style for s in samples], method=method, seed=seed)
    labels = kmeans_2(proj.coords, seed=seed) if cluster and n >= 4 else None
    for i, s in enumerate(samples):
        s.proj = (float(proj.coords[i, 0]), float(proj.coords[i, 1]))
        s.cluster = None if labels is None else int(labels[i])
    meta = {
        "n": n,
        "seed": seed,
        "method": method,
        "checkpoint": checkpoint_digest(checkpoint_path),
        "style_dim": int(state.meta.get("style_dim", samples[0].style.shape[-1])),
        "degenerate_projection": proj.degenerate,
    }
    return export_atlas(samples, out_dir, reference_label, meta)
