"""Procedural multi-class 2-D phantoms: nested-ellipse anatomy with a
style-parameterised renderer, two render modalities with opposite bone
contrast, mixup, normalisation, and a small binary pair format (GPH1) with
patient-grouped splits."""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

MAGIC = b"GPH1"

CLASS_NAMES = ("background", "body", "bone", "organ_a", "organ_b")

# per-class base intensity ranges; modality B inverts the bone/body contrast
# the way a second imaging physics would
_INTENSITIES = {
    "A": {0: (0.02, 0.08), 1: (0.35, 0.50), 2: (0.78, 0.95), 3: (0.55, 0.70), 4: (0.18, 0.30)},
    "B": {0: (0.02, 0.08), 1: (0.55, 0.70), 2: (0.05, 0.16), 3: (0.30, 0.42), 4: (0.80, 0.95)},
}


class FormatError(ValueError):
    """Malformed GPH1 file; the message carries the byte offset."""


class GenerationError(RuntimeError):
    """Geometry ranges could not fit all classes after bounded retries."""


@dataclass
class PhantomSpec:
    size: int = 64
    num_classes: int = 5
    modality: str = "A"
    # ellipse geometry as fractions of the image size: (axis range, centre offset)
    body_axes: tuple[float, float] = (0.30, 0.42)
    body_jitter: float = 0.03
    bone_axes: tuple[float, float] = (0.07, 0.13)
    bone_offset: tuple[float, float] = (-0.16, 0.0)
    organ_a_axes: tuple[float, float] = (0.08, 0.14)
    organ_a_offset: tuple[float, float] = (0.10, -0.14)
    organ_b_axes: tuple[float, float] = (0.06, 0.10)
    organ_b_offset: tuple[float, float] = (0.10, 0.15)
    organ_jitter: float = 0.03
    contrast_range: tuple[float, float] = (0.85, 1.15)
    blur_sigma_range: tuple[float, float] = (0.4, 0.9)
    noise_sigma_range: tuple[float, float] = (0.01, 0.035)
    bias_amplitude_range: tuple[float, float] = (0.05, 0.2)
    max_retries: int = 50

    def __post_init__(self):
        if self.modality not in _INTENSITIES:
            raise ValueError(f"unknown modality {self.modality!r}")
        if self.num_classes != len(CLASS_NAMES):
            raise ValueError(f"phantoms define {len(CLASS_NAMES)} classes")

    def intensity_range(self, class_id: int) -> tuple[float, float]:
        return _INTENSITIES[self.modality][class_id]

    def to_dict(self) -> dict:
        return {
            "size": self.size,
            "num_classes": self.num_classes,
            "modality": self.modality,
        }


@dataclass
class RenderStyle:
    """Concrete per-sample draw of the render parameters."""

    intensities: dict[int, float]
    contrast: float
    blur_sigma: float
    noise_sigma: float
    bias_amplitude: float
    bias_freqs: tuple[float, float, float, float]
    bias_phases: tuple[float, float, float, float]

    def to_dict(self) -> dict:
        return {
            "intensities": {str(k): v for k, v in self.intensities.items()},
            "contrast": self.contrast,
            "blur_sigma": self.blur_sigma,
            "noise_sigma": self.noise_sigma,
            "bias_amplitude": self.bias_amplitude,
        }


@dataclass
class LabeledPair:
    """One image with its one-hot label map."""

    image: np.ndarray  # H,W,1 float32 in [0,1]
    label: np.ndarray  # H,W,C float32 one-hot
    meta: dict = field(default_factory=dict)

    @property
    def label_indices(self) -> np.ndarray:
        return self.label.argmax(axis=-1).astype(np.uint8)


def one_hot(indices: np.ndarray, num_classes: int) -> np.ndarray:
    out = np.zeros(indices.shape + (num_classes,), dtype=np.float32)
    np.put_along_axis(out, indices[..., None].astype(np.int64), 1.0, axis=-1)
    return out


def _ellipse_mask(size, cy, cx, ay, ax, theta) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    y = (yy - cy) / size
    x = (xx - cx) / size
    ct, st = np.cos(theta), np.sin(theta)
    u = (x * ct + y * st) / ax
    v = (-x * st + y * ct) / ay
    return u * u + v * v <= 1.0


def sample_geometry(rng: np.random.Generator, spec: PhantomSpec) -> np.ndarray:
    """Label-index raster with all classes present; retries then raises."""
    s = spec.size
    for _ in range(spec.max_retries):
        labels = np.zeros((s, s), dtype=np.uint8)
        cy = s * (0.5 + rng.uniform(-spec.body_jitter, spec.body_jitter))
        cx = s * (0.5 + rng.uniform(-spec.body_jitter, spec.body_jitter))
        ay = rng.uniform(*spec.body_axes)
        ax = rng.uniform(*spec.body_axes)
        body = _ellipse_mask(s, cy, cx, ay, ax, rng.uniform(0, np.pi))
        labels[body] = 1

        organs = (
            (2, spec.bone_offset, spec.bone_axes),
            (3, spec.organ_a_offset, spec.organ_a_axes),
            (4, spec.organ_b_offset, spec.organ_b_axes),
        )
        ok = body.sum() >= 64
        for class_id, (dy, dx), axes in organs:
            if not ok:
                break
            ocy = cy + s * (dy + rng.uniform(-spec.organ_jitter, spec.organ_jitter))
            ocx = cx + s * (dx + rng.uniform(-spec.organ_jitter, spec.organ_jitter))
            ell = _ellipse_mask(
                s, ocy, ocx, rng.uniform(*axes), rng.uniform(*axes), rng.uniform(0, np.pi)
            )
            region = ell & (labels == 1)  # stay inside the body, off other organs
            if region.sum() < max(8, 0.7 * ell.sum()):
                ok = False
                break
            labels[region] = class_id
        if ok and len(np.unique(labels)) == spec.num_classes:
            return labels
    raise GenerationError(
        f"could not place all {spec.num_classes} classes in {spec.max_retries} tries"
    )


def sample_style(rng: np.random.Generator, spec: PhantomSpec) -> RenderStyle:
    return RenderStyle(
        intensities={c: rng.uniform(*spec.intensity_range(c)) for c in range(spec.num_classes)},
        contrast=rng.uniform(*spec.contrast_range),
        blur_sigma=rng.uniform(*spec.blur_sigma_range),
        noise_sigma=rng.uniform(*spec.noise_sigma_range),
        bias_amplitude=rng.uniform(*spec.bias_amplitude_range),
        bias_freqs=tuple(rng.uniform(0.3, 1.0, size=4)),
        bias_phases=tuple(rng.uniform(0, 2 * np.pi, size=4)),
    )


def render_image(
    labels: np.ndarray,
    style: RenderStyle,
    noise_rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Fill -> bias field -> blur -> noise -> contrast -> clamp to [0,1].

    Pass noise_rng=None for the deterministic noiseless render.
    """
    size = labels.shape[0]
    img = np.zeros(labels.shape, dtype=np.float64)
    for class_id, intensity in style.intensities.items():
        img[labels == class_id] = intensity

    fy1, fx1, fy2, fx2 = style.bias_freqs
    p1, p2, p3, p4 = style.bias_phases
    yy, xx = np.mgrid[0:size, 0:size] / size
    bias = 0.5 * (
        np.cos(2 * np.pi * fy1 * yy + p1) * np.cos(2 * np.pi * fx1 * xx + p2)
        + np.cos(2 * np.pi * fy2 * yy + p3) * np.cos(2 * np.pi * fx2 * xx + p4)
    )
    img = img + style.bias_amplitude * bias
    img = gaussian_filter(img, style.blur_sigma)
    if noise_rng is not None and style.noise_sigma > 0:
        img = img + noise_rng.normal(0.0, style.noise_sigma, size=img.shape)
    img = 0.5 + style.contrast * (img - 0.5)
    return np.clip(img, 0.0, 1.0).astype(np.float32)[..., None]


def gen_phantom(seed: int, spec: PhantomSpec) -> LabeledPair:
    """Deterministic labelled phantom for a seed."""
    rng = np.random.default_rng(seed)
    labels = sample_geometry(rng, spec)
    style = sample_style(rng, spec)
    image = render_image(labels, style, noise_rng=rng)
    meta = {"seed": seed, "modality": spec.modality, "style": style.to_dict()}
    return LabeledPair(image=image, label=one_hot(labels, spec.num_classes), meta=meta)


# -- normalisation -------------------------------------------------------------


def minmax01(image: np.ndarray) -> np.ndarray:
    """Min-max rescale to [0,1]; constant images collapse to zeros (warned)."""
    lo, hi = float(image.min()), float(image.max())
    if hi - lo < 1e-12:
        warnings.warn("constant image: min-max scale guard returned zeros", stacklevel=2)
        return np.zeros_like(image)
    return ((image - lo) / (hi - lo)).astype(image.dtype)


def standardize(image: np.ndarray) -> np.ndarray:
    """Shift/scale to zero mean, unit variance; constant images become zeros."""
    std = float(image.std())
    if std < 1e-12:
        warnings.warn("constant image: standardisation guard returned zeros", stacklevel=2)
        return np.zeros_like(image)
    return ((image - image.mean()) / std).astype(image.dtype)


def normalize(image: np.ndarray) -> np.ndarray:
    """Two-stage intensity normalisation: min-max to [0,1], then standardise.

    The standardised form is what the networks consume; synthesis targets the
    intermediate [0,1] form.
    """
    return standardize(minmax01(image))


def mixup(
    pair1: LabeledPair,
    pair2: LabeledPair,
    alpha: float,
    rng: np.random.Generator | None = None,
    lam: float | None = None,
) -> LabeledPair:
    """Convex combination of two pairs with a shared Beta(alpha, alpha) weight."""
    if alpha <= 0:
        raise ValueError(f"mixup alpha must be positive, got {alpha}")
    if pair1.image.shape != pair2.image.shape or pair1.label.shape != pair2.label.shape:
        raise ValueError("mixup needs pairs of matching shapes")
    if lam is None:
        lam = float((rng or np.random.default_rng()).beta(alpha, alpha))
    image = lam * pair1.image + (1.0 - lam) * pair2.image
    label = lam * pair1.label + (1.0 - lam) * pair2.label
    return LabeledPair(
        image=image.astype(np.float32),
        label=label.astype(np.float32),
        meta={"mixup_lam": lam, "sources": [pair1.meta.get("seed"), pair2.meta.get("seed")]},
    )


# -- GPH1 file format -----------------------------------------------------------


def write_pair(path, pair: LabeledPair) -> None:
    h, w, c = pair.label.shape
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<III", h, w, c)
    buf += pair.image.astype("<f4").tobytes()
    buf += pair.label_indices.tobytes()
    meta = json.dumps(pair.meta).encode()
    buf += struct.pack("<I", len(meta))
    buf += meta
    Path(path).write_bytes(bytes(buf))


def read_pair(path) -> LabeledPair:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic at byte 0")
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated header at byte {len(raw)}")
    h, w, c = struct.unpack_from("<III", raw, 4)
    off = 16
    img_bytes = h * w * 4
    if len(raw) < off + img_bytes:
        raise FormatError(f"{path}: truncated image raster at byte {len(raw)}")
    image = np.frombuffer(raw, dtype="<f4", count=h * w, offset=off).reshape(h, w, 1)
    off += img_bytes
    if len(raw) < off + h * w:
        raise FormatError(f"{path}: truncated label raster at byte {len(raw)}")
    labels = np.frombuffer(raw, dtype=np.uint8, count=h * w, offset=off).reshape(h, w)
    if labels.max() >= c:
        raise FormatError(f"{path}: label index {labels.max()} >= {c} at byte {off}")
    off += h * w
    if len(raw) < off + 4:
        raise FormatError(f"{path}: missing metadata length at byte {len(raw)}")
    (meta_len,) = struct.unpack_from("<I", raw, off)
    off += 4
    if len(raw) < off + meta_len:
        raise FormatError(f"{path}: truncated metadata at byte {len(raw)}")
    try:
        meta = json.loads(raw[off : off + meta_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: bad metadata block at byte {off}: {exc}") from exc
    return LabeledPair(
        image=np.ascontiguousarray(image.astype(np.float32)),
        label=one_hot(labels, c),
        meta=meta,
    )


# -- splits ---------------------------------------------------------------------

GROUP_SIZE = 8  # phantoms per synthetic "patient"


def make_split(
    n_train: int, n_val: int, n_test: int, seed: int, group_size: int = GROUP_SIZE
) -> dict[str, list[int]]:
    """Assign phantom seeds to splits, whole patient blocks at a time.

    A patient owns a contiguous block of `group_size` seeds; every patient
    lands in exactly one split, so no seed block spans two splits.
    """
    counts = {"train": n_train, "val": n_val, "test": n_test}
    if min(counts.values()) < 0 or sum(counts.values()) == 0:
        raise ValueError("split sizes must be non-negative and not all zero")
    patients_needed = {k: -(-n // group_size) for k, n in counts.items() if n > 0}
    total_patients = sum(patients_needed.values())
    order = np.random.default_rng(seed).permutation(total_patients)
    splits: dict[str, list[int]] = {"train": [], "val": [], "test": []}
    cursor = 0
    for name in ("train", "val", "test"):
        take = patients_needed.get(name, 0)
        for patient in order[cursor : cursor + take]:
            start = int(patient) * group_size
            splits[name].extend(range(start, start + group_size))
        cursor += take
        splits[name] = splits[name][: counts[name]]
    return splits


def generate_dataset(
    out_dir,
    n_train: int,
    n_val: int,
    n_test: int,
    seed: int,
    size: int = 64,
    modality: str = "A",
) -> Path:
    """Write GPH1 pairs plus a manifest; returns the manifest path.

    modality "mix" alternates modalities patient-by-patient so every split
    carries both render styles.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    splits = make_split(n_train, n_val, n_test, seed)
    offset = seed * 1_000_003  # decouple phantom content across dataset seeds
    manifest = {"size": size, "modality": modality, "seed": seed, "splits": {}}
    for name, seeds in splits.items():
        paths = []
        for s in seeds:
            mod = modality
            if modality == "mix":
                mod = "A" if (s // GROUP_SIZE) % 2 == 0 else "B"
            spec = PhantomSpec(size=size, modality=mod)
            pair = gen_phantom(offset + s, spec)
            pair.meta["split_seed"] = s
            fname = f"phantom_{s:06d}.gph"
            write_pair(out / fname, pair)
            paths.append(fname)
        manifest["splits"][name] = paths
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=1))
    return manifest_path


def load_split(manifest_path, split: str) -> list[LabeledPair]:
    manifest = json.loads(Path(manifest_path).read_text())
    base = Path(manifest_path).parent
    return [read_pair(base / name) for name in manifest["splits"][split]]


def stack_pairs(pairs: list[LabeledPair]) -> tuple[np.ndarray, np.ndarray]:
    images = np.stack([p.image for p in pairs]).astype(np.float32)
    labels = np.stack([p.label for p in pairs]).astype(np.float32)
    return images, labels


def inverse_frequency_weights(labels: np.ndarray) -> np.ndarray:
    """Per-class inverse pixel-frequency weights, normalised to sum 1."""
    freq = labels.reshape(-1, labels.shape[-1]).mean(axis=0)
    inv = 1.0 / np.maximum(freq, 1e-8)
    return inv / inv.sum()


def bone_contrast(image: np.ndarray, label_indices: np.ndarray) -> float:
    """Mean intensity difference bone minus body: positive for modality A
    renders, negative for modality B."""
    img = image[..., 0] if image.ndim == 3 else image
    bone = img[label_indices == 2]
    body = img[label_indices == 1]
    if bone.size == 0 or body.size == 0:
        raise ValueError("bone/body regions missing from the label map")
    return float(bone.mean() - body.mean())
