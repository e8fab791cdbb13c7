"""Proposal generation, RGB-P feature extraction, and linear-SVM scoring.

The P-channel leg runs HoG on the P-map and reduces it with PCA before
concatenation with an RGB descriptor (HoG on grayscale plus per-channel color
histograms). An "RGB-only" mode omits the P leg so the two feature sets can
be compared on the same corpus.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CorruptData,
    DimensionMismatch,
    IoFailure,
    NotFound,
    ParseError,
    RankTooHigh,
    ScaleTooLarge,
    SingleClass,
    UnsupportedFormat,
    ValueOutOfRange,
)
from .imagecore import ProbMap, RectProposal, RgbImage, crop, rect_iou
from .rng import SplitMix64

MODEL_MAGIC = b"PMDETv01"


@dataclass(frozen=True)
class HogConfig:
    cell_size: int = 8
    block_size: int = 2
    n_bins: int = 9
    patch_size: int = 64

    def __post_init__(self):
        if self.patch_size % self.cell_size != 0:
            raise ValueOutOfRange("patch_size must be divisible by cell_size")
        if self.block_size > self.patch_size // self.cell_size:
            raise ValueOutOfRange("block must fit inside the cell grid")
        if self.n_bins < 1:
            raise ValueOutOfRange("n_bins must be >= 1")

    @property
    def cells(self) -> int:
        return self.patch_size // self.cell_size

    @property
    def blocks(self) -> int:
        return self.cells - self.block_size + 1

    @property
    def dimension(self) -> int:
        return self.blocks * self.blocks * self.block_size * self.block_size * self.n_bins


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray  # (d,)
    basis: np.ndarray  # (r, d), orthonormal rows

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        basis = np.asarray(self.basis, dtype=np.float64)
        if basis.ndim != 2 or mean.shape != (basis.shape[1],):
            raise ValueOutOfRange("PCA parameter shapes inconsistent")
        gram = basis @ basis.T
        if not np.allclose(gram, np.eye(basis.shape[0]), atol=1e-6):
            raise ValueOutOfRange("PCA basis rows must be orthonormal")
        mean.setflags(write=False)
        basis.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "basis", basis)

    @property
    def r(self) -> int:
        return self.basis.shape[0]


@dataclass(frozen=True, eq=False)
class LinearSvm:
    weights: np.ndarray  # (d,)
    bias: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or not np.isfinite(w).all() or not np.isfinite(self.bias):
            raise ValueOutOfRange("SVM parameters must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def dim(self) -> int:
        return self.weights.shape[0]


# ------------------------------------------------------------------ proposals


def gen_proposals(image: RgbImage, scales, stride_frac: float, aspect_ratios) -> list[RectProposal]:
    """Multi-scale sliding windows, ordered by scale, ratio, then row-major."""
    if stride_frac <= 0:
        raise ValueOutOfRange("stride_frac must be > 0")
    out = []
    for scale in scales:
        if scale > min(image.width, image.height):
            raise ScaleTooLarge(
                f"scale {scale} exceeds min image dimension {min(image.width, image.height)}"
            )
        stride = max(1, int(round(stride_frac * scale)))
        for ratio in aspect_ratios:
            w = int(round(scale * np.sqrt(ratio)))
            h = int(round(scale / np.sqrt(ratio)))
            if w < 1 or h < 1 or w > image.width or h > image.height:
                continue
            for y in range(0, image.height - h + 1, stride):
                for x in range(0, image.width - w + 1, stride):
                    out.append(RectProposal(x, y, w, h))
    return out


def load_proposals(path) -> list[RectProposal]:
    """Read JSON-lines proposals: {"x":..,"y":..,"w":..,"h":..[,"confidence":..]}."""
    p = Path(path)
    if not p.exists():
        raise NotFound(f"no such file: {p}")
    out = []
    for lineno, line in enumerate(p.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            rect = RectProposal(
                obj["x"], obj["y"], obj["w"], obj["h"], confidence=obj.get("confidence")
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueOutOfRange) as exc:
            raise ParseError(f"{p}:{lineno}: bad proposal line: {exc}") from exc
        out.append(rect)
    return out


def save_proposals(path, proposals) -> None:
    lines = []
    for r in proposals:
        obj = {"x": r.x, "y": r.y, "w": r.w, "h": r.h}
        if r.confidence is not None:
            obj["confidence"] = r.confidence
        lines.append(json.dumps(obj))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def label_samples(proposals, gt_rects, thresh: float = 0.8) -> np.ndarray:
    """True where a proposal overlaps some gt rect with IoU > thresh."""
    if not 0.0 < thresh < 1.0:
        raise ValueOutOfRange("thresh must lie in (0, 1)")
    labels = np.zeros(len(proposals), dtype=bool)
    for i, prop in enumerate(proposals):
        best = max((rect_iou(prop, gt) for gt in gt_rects), default=0.0)
        labels[i] = best > thresh
    return labels


# ------------------------------------------------------------------- features


def bilinear_resize(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    src = np.asarray(arr, dtype=np.float64)
    h, w = src.shape
    if (h, w) == (out_h, out_w):
        return src.copy()
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0)[:, None]
    fx = np.clip(xs - x0, 0.0, 1.0)[None, :]
    top = src[np.ix_(y0, x0)] * (1 - fx) + src[np.ix_(y0, x1)] * fx
    bot = src[np.ix_(y1, x0)] * (1 - fx) + src[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


def hog(raster: np.ndarray, cfg: HogConfig = HogConfig()) -> np.ndarray:
    """Histogram of oriented gradients on a single-channel raster in [0, 1].

    The raster is resampled to the configured patch size; gradients are
    central differences on a replicate-padded patch; votes interpolate
    linearly between the two nearest unsigned orientation bins (bin centers
    at multiples of 180/n_bins); blocks are L2-hys normalized (clip 0.2).
    """
    patch = bilinear_resize(np.asarray(raster, dtype=np.float64), cfg.patch_size, cfg.patch_size)
    padded = np.pad(patch, 1, mode="edge")
    gx = (padded[1:-1, 2:] - padded[1:-1, :-2]) * 0.5
    gy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) * 0.5
    mag = np.hypot(gx, gy)
    ang = np.degrees(np.arctan2(gy, gx)) % 180.0

    bin_width = 180.0 / cfg.n_bins
    pos = ang / bin_width
    lo = np.floor(pos).astype(int) % cfg.n_bins
    hi = (lo + 1) % cfg.n_bins
    frac = pos - np.floor(pos)

    cells = np.zeros((cfg.cells, cfg.cells, cfg.n_bins))
    cs = cfg.cell_size
    for cy in range(cfg.cells):
        for cx in range(cfg.cells):
            sl = (slice(cy * cs, (cy + 1) * cs), slice(cx * cs, (cx + 1) * cs))
            m, l, h, f = mag[sl].ravel(), lo[sl].ravel(), hi[sl].ravel(), frac[sl].ravel()
            cells[cy, cx] = np.bincount(l, m * (1 - f), cfg.n_bins) + np.bincount(
                h, m * f, cfg.n_bins
            )

    feats = []
    b = cfg.block_size
    for by in range(cfg.blocks):
        for bx in range(cfg.blocks):
            v = cells[by : by + b, bx : bx + b].ravel()
            norm = np.linalg.norm(v)
            if norm > 1e-12:
                v = np.minimum(v / norm, 0.2)
                norm2 = np.linalg.norm(v)
                v = v / norm2 if norm2 > 1e-12 else np.zeros_like(v)
            else:
                v = np.zeros_like(v)
            feats.append(v)
    return np.concatenate(feats)


def pca_fit(samples, r: int) -> PcaModel:
    """Top-r principal directions of mean-centered samples (via SVD)."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueOutOfRange("pca_fit needs at least 2 samples")
    n, d = x.shape
    if r > min(d, n - 1) or r < 1:
        raise RankTooHigh(f"rank {r} exceeds min(dim {d}, n-1 {n - 1})")
    mean = x.mean(axis=0)
    _, _, vt = np.linalg.svd(x - mean, full_matrices=False)
    return PcaModel(mean, vt[:r])


def pca_project(model: PcaModel, v: np.ndarray) -> np.ndarray:
    x = np.asarray(v, dtype=np.float64)
    if x.shape[-1] != model.mean.shape[0]:
        raise DimensionMismatch(
            f"vector dim {x.shape[-1]} does not match PCA dim {model.mean.shape[0]}"
        )
    return (x - model.mean) @ model.basis.T


def svm_objective(weights: np.ndarray, bias: float, x: np.ndarray, y: np.ndarray, lam: float) -> float:
    margins = y * (x @ weights + bias)
    hinge = np.maximum(0.0, 1.0 - margins).mean()
    return 0.5 * lam * (weights @ weights + bias * bias) + hinge


def svm_train(features, labels, lam: float = 1e-4, epochs: int = 30, seed: int = 1) -> LinearSvm:
    """Pegasos-style stochastic subgradient training.

    The returned model is the best iterate by full regularized objective
    among per-epoch snapshots and the zero model, so training never ends
    worse than doing nothing.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValueOutOfRange("features must be (n, d) with one +-1 label per row")
    if not ((y == 1) | (y == -1)).all():
        raise ValueOutOfRange("labels must be +-1")
    if (y == 1).all() or (y == -1).all():
        raise SingleClass("training needs at least one sample of each class")
    if lam <= 0:
        raise ValueOutOfRange("lambda must be > 0")

    n, d = x.shape
    aug = np.hstack([x, np.ones((n, 1))])  # bias as an extra regularized weight
    w = np.zeros(d + 1)
    rng = SplitMix64(seed)
    best_w, best_obj = w.copy(), svm_objective(w[:d], w[d], x, y, lam)
    t = 0
    for _ in range(epochs):
        for _ in range(n):
            t += 1
            i = rng.randint(n)
            eta = 1.0 / (lam * t)
            margin = y[i] * (aug[i] @ w)
            w *= 1.0 - 1.0 / t
            if margin < 1.0:
                w += eta * y[i] * aug[i]
        obj = svm_objective(w[:d], w[d], x, y, lam)
        if obj < best_obj:
            best_obj, best_w = obj, w.copy()
    return LinearSvm(best_w[:d], best_w[d])


def svm_score(model: LinearSvm, v: np.ndarray):
    x = np.asarray(v, dtype=np.float64)
    if x.shape[-1] != model.dim:
        raise DimensionMismatch(f"vector dim {x.shape[-1]} does not match SVM dim {model.dim}")
    return x @ model.weights + model.bias


_LUMA = np.array([0.299, 0.587, 0.114])
COLOR_HIST_BINS = 16


def rgb_descriptor(image_patch: RgbImage, cfg: HogConfig) -> np.ndarray:
    """HoG on Rec.601 luma plus 16-bin per-channel color histograms."""
    px = image_patch.pixels.astype(np.float64)
    gray = (px @ _LUMA) / 255.0
    hists = []
    for c in range(3):
        counts, _ = np.histogram(px[:, :, c], bins=COLOR_HIST_BINS, range=(0, 256))
        hists.append(counts / px[:, :, c].size)
    return np.concatenate([hog(gray, cfg), *hists])


def build_rgbp_features(
    image_patch: RgbImage,
    pmap_patch: ProbMap | None,
    cfg: HogConfig = HogConfig(),
    pca_p: PcaModel | None = None,
    rgb_only: bool = False,
) -> np.ndarray:
    """Concatenated RGB descriptor and PCA-reduced P-map HoG."""
    rgb = rgb_descriptor(image_patch, cfg)
    if rgb_only:
        return rgb
    if pmap_patch is None or pca_p is None:
        raise ValueOutOfRange("RGB-P mode needs both a P-map patch and a fitted PCA")
    if (pmap_patch.width, pmap_patch.height) != (image_patch.width, image_patch.height):
        raise DimensionMismatch(
            f"P-map patch {pmap_patch.width}x{pmap_patch.height} vs image patch "
            f"{image_patch.width}x{image_patch.height}"
        )
    p_feat = pca_project(pca_p, hog(pmap_patch.values, cfg))
    return np.concatenate([rgb, p_feat])


# ---------------------------------------------------------------- aggregation


def aggregate_pmap(image_dims: tuple[int, int], entries) -> ProbMap:
    """Confidence-weighted accumulation of per-proposal P-maps.

    entries: iterable of (rect, ProbMap, confidence). The accumulated map is
    normalized by its global maximum; pixels no proposal covers stay zero.
    """
    width, height = image_dims
    acc = np.zeros((height, width), dtype=np.float64)
    for rect, local, conf in entries:
        if conf < 0 or not np.isfinite(conf):
            raise ValueOutOfRange("confidence must be finite and >= 0")
        if (local.width, local.height) != (rect.w, rect.h):
            raise DimensionMismatch(
                f"local map {local.width}x{local.height} does not match rect {rect.w}x{rect.h}"
            )
        if not rect.inside(width, height):
            raise DimensionMismatch("entry rect lies outside the aggregation canvas")
        acc[rect.y : rect.y + rect.h, rect.x : rect.x + rect.w] += float(conf) * local.values.astype(
            np.float64
        )
    peak = acc.max()
    if peak > 0:
        acc /= peak
    return ProbMap(acc)


def nms(scored_rects, iou_thresh: float = 0.5):
    """Greedy non-maximum suppression for display; keeps highest scores."""
    ordered = sorted(scored_rects, key=lambda rs: -rs[1])
    kept = []
    for rect, score in ordered:
        if all(rect_iou(rect, k) < iou_thresh for k, _ in kept):
            kept.append((rect, score))
    return kept


# ------------------------------------------------------------ detector model


@dataclass(frozen=True, eq=False)
class DetectorModel:
    cfg: HogConfig
    svm: LinearSvm
    pca: PcaModel | None
    rgb_only: bool

    def features(self, image_patch: RgbImage, pmap_patch: ProbMap | None) -> np.ndarray:
        return build_rgbp_features(image_patch, pmap_patch, self.cfg, self.pca, self.rgb_only)


def score_proposals(model: DetectorModel, image: RgbImage, pmap: ProbMap | None, proposals):
    """(rect, score) pairs sorted by descending score."""
    scored = []
    for rect in proposals:
        patch = crop(image, rect)
        ppatch = None if model.rgb_only else crop(pmap, rect)
        score = float(svm_score(model.svm, model.features(patch, ppatch)))
        scored.append((rect, score))
    scored.sort(key=lambda rs: -rs[1])
    return scored


def write_detections(path, scored) -> None:
    """JSON array of {rect, score}, sorted descending by score."""
    items = [
        {"rect": {"x": r.x, "y": r.y, "w": r.w, "h": r.h}, "score": s}
        for r, s in sorted(scored, key=lambda rs: -rs[1])
    ]
    Path(path).write_text(json.dumps(items, indent=2) + "\n")


def save_model(model: DetectorModel, path) -> None:
    """Versioned little-endian binary serialization."""
    parts = [MODEL_MAGIC]
    flags = 1 if model.rgb_only else 0
    parts.append(
        struct.pack(
            "<IIIIII",
            1,
            flags,
            model.cfg.cell_size,
            model.cfg.block_size,
            model.cfg.n_bins,
            model.cfg.patch_size,
        )
    )
    parts.append(struct.pack("<Id", model.svm.dim, model.svm.bias))
    parts.append(model.svm.weights.astype("<f8").tobytes())
    if model.pca is None:
        parts.append(struct.pack("<B", 0))
    else:
        parts.append(struct.pack("<BII", 1, model.pca.r, model.pca.mean.shape[0]))
        parts.append(model.pca.mean.astype("<f8").tobytes())
        parts.append(model.pca.basis.astype("<f8").tobytes())
    try:
        Path(path).write_bytes(b"".join(parts))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_model(path) -> DetectorModel:
    p = Path(path)
    if not p.exists():
        raise NotFound(f"no such file: {p}")
    data = p.read_bytes()
    if len(data) < 8 or data[:8] != MODEL_MAGIC:
        raise UnsupportedFormat(f"not a detector model file: {p}")
    try:
        off = 8
        version, flags, cell, block, bins, patch = struct.unpack_from("<IIIIII", data, off)
        off += 24
        if version != 1:
            raise UnsupportedFormat(f"unsupported model version {version}")
        svm_dim, bias = struct.unpack_from("<Id", data, off)
        off += 12
        weights = np.frombuffer(data, dtype="<f8", count=svm_dim, offset=off)
        off += svm_dim * 8
        (has_pca,) = struct.unpack_from("<B", data, off)
        off += 1
        pca = None
        if has_pca:
            r, d = struct.unpack_from("<II", data, off)
            off += 8
            mean = np.frombuffer(data, dtype="<f8", count=d, offset=off)
            off += d * 8
            basis = np.frombuffer(data, dtype="<f8", count=r * d, offset=off).reshape(r, d)
            off += r * d * 8
            pca = PcaModel(mean.copy(), basis.copy())
        if off != len(data):
            raise CorruptData(f"model file has {len(data) - off} trailing bytes")
    except struct.error as exc:
        raise CorruptData(f"truncated model file: {exc}") from exc
    return DetectorModel(
        cfg=HogConfig(cell, block, bins, patch),
        svm=LinearSvm(weights.copy(), bias),
        pca=pca,
        rgb_only=bool(flags & 1),
    )
