"""Benchmark orchestration: cutout method comparison and the proposal-scoring
ablation, with JSON/CSV reports and rendered figures.

Each scene contributes one run per (target, method). Methods run on a context
window around the ground-truth rectangle (the rect expanded by a margin
fraction per side, clamped to the canvas) so the baseline has background to
model and look-alike clutter stays in view. Runs where a method degenerates
to an empty foreground or background are recorded with IoU 0 rather than
aborting the sweep; that collapse is a measured outcome here, not an error.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, replace

import numpy as np

from .cutout import CutoutParams, plain_grabcut_with_iterations, pmap_grabcut
from .detect import HogConfig, hog, label_samples, gen_proposals, pca_fit, rgb_descriptor, svm_score, svm_train
from .errors import EmptyBackground, EmptyForeground, EmptyInput, ValueOutOfRange
from .imagecore import CutoutMask, RectProposal, crop
from .metrics import balanced_recall, mask_iou
from .rng import SplitMix64
from .synth import OracleNoise, SceneSpec, gen_scene, oracle_pmap

METHODS = ("pmap_grabcut", "plain_grabcut")
REPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class BenchRecord:
    scene_seed: int
    target: int
    method: str
    iou: float
    runtime_ms: float
    iterations: int
    degenerate: bool


@dataclass(frozen=True, eq=False)
class BenchReport:
    records: tuple[BenchRecord, ...]

    def mean_iou(self, method: str) -> float:
        vals = [r.iou for r in self.records if r.method == method]
        if not vals:
            raise ValueOutOfRange(f"no records for method {method}")
        return float(np.mean(vals))

    def methods(self):
        return sorted({r.method for r in self.records})

    def win_counts(self):
        """Per (scene, target): the strictly best method gets the win."""
        wins = {m: 0 for m in self.methods()}
        keys = sorted({(r.scene_seed, r.target) for r in self.records})
        for key in keys:
            group = [r for r in self.records if (r.scene_seed, r.target) == key]
            best = max(r.iou for r in group)
            top = [r.method for r in group if r.iou == best]
            if len(top) == 1:
                wins[top[0]] += 1
        return wins

    def summary(self) -> dict:
        return {
            "mean_iou": {m: self.mean_iou(m) for m in self.methods()},
            "win_counts": self.win_counts(),
            "degenerate_runs": {
                m: sum(1 for r in self.records if r.method == m and r.degenerate)
                for m in self.methods()
            },
            "runs": len(self.records),
        }

    def to_json(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "records": [
                {
                    "scene_seed": r.scene_seed,
                    "target": r.target,
                    "method": r.method,
                    "iou": r.iou,
                    "runtime_ms": r.runtime_ms,
                    "iterations": r.iterations,
                    "degenerate": r.degenerate,
                }
                for r in self.records
            ],
            "summary": self.summary(),
        }


def make_scene_grid(
    n_scenes: int,
    base_seed: int = 1,
    width: int = 200,
    height: int = 150,
    n_targets: int = 1,
    n_distractors: int = 3,
    palette_overlap: float = 1.0,
    background_kind: str = "texture",
) -> list[SceneSpec]:
    return [
        SceneSpec(width, height, n_targets, n_distractors, palette_overlap, background_kind, base_seed + i)
        for i in range(n_scenes)
    ]


def context_rect(rect: RectProposal, width: int, height: int, margin: float = 0.6) -> RectProposal:
    mx, my = int(round(rect.w * margin)), int(round(rect.h * margin))
    x0, y0 = max(0, rect.x - mx), max(0, rect.y - my)
    x1 = min(width, rect.x + rect.w + mx)
    y1 = min(height, rect.y + rect.h + my)
    return RectProposal(x0, y0, x1 - x0, y1 - y0)


def run_benchmark(
    spec_grid,
    noise: OracleNoise,
    params: CutoutParams,
    methods=METHODS,
    context_margin: float = 0.6,
) -> BenchReport:
    """Run each method on every target of every scene and collect IoU/timing."""
    specs = list(spec_grid)
    if not specs:
        raise EmptyInput("benchmark needs at least one scene spec")
    for m in methods:
        if m not in METHODS:
            raise ValueOutOfRange(f"unknown method {m!r}; choose from {METHODS}")

    records = []
    for spec in specs:
        scene = gen_scene(spec)
        for t, (gt, rect) in enumerate(zip(scene.gt_masks, scene.gt_rects)):
            others = [m for j, m in enumerate(scene.gt_masks) if j != t]
            scene_noise = replace(noise, seed=noise.seed + spec.seed)
            pmap = oracle_pmap(gt, list(scene.distractor_masks) + others, scene_noise)
            ctx = context_rect(rect, spec.width, spec.height, context_margin)
            img_c, pm_c, gt_c = crop(scene.image, ctx), crop(pmap, ctx), crop(gt, ctx)
            rect_c = RectProposal(rect.x - ctx.x, rect.y - ctx.y, rect.w, rect.h)
            for method in sorted(methods):
                t0 = time.perf_counter()
                degenerate = False
                iterations = 0
                try:
                    if method == "pmap_grabcut":
                        mask, trace = pmap_grabcut(img_c, pm_c, params)
                        iterations = trace.iterations
                    else:
                        mask, iterations = plain_grabcut_with_iterations(img_c, rect_c, params)
                    iou = mask_iou(mask, gt_c)
                except (EmptyForeground, EmptyBackground):
                    degenerate = True
                    iou = mask_iou(CutoutMask(np.zeros_like(gt_c.labels)), gt_c)
                records.append(
                    BenchRecord(
                        scene_seed=spec.seed,
                        target=t,
                        method=method,
                        iou=float(iou),
                        runtime_ms=(time.perf_counter() - t0) * 1000.0,
                        iterations=iterations,
                        degenerate=degenerate,
                    )
                )
    records.sort(key=lambda r: (r.scene_seed, r.target, r.method))
    return BenchReport(tuple(records))


def write_report_json(report: BenchReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_json(), fh, indent=2)
        fh.write("\n")


def write_report_csv(report: BenchReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scene_seed", "target", "method", "iou", "runtime_ms", "iterations", "degenerate"])
        for r in report.records:
            writer.writerow(
                [r.scene_seed, r.target, r.method, f"{r.iou:.6f}", f"{r.runtime_ms:.3f}", r.iterations, int(r.degenerate)]
            )


def render_report_figures(report: BenchReport, out_dir) -> list[str]:
    """Render comparison figures next to the delimited reports."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from pathlib import Path

    out = Path(out_dir)
    paths = []
    methods = report.methods()

    fig, ax = plt.subplots(figsize=(6, 4))
    means = [report.mean_iou(m) for m in methods]
    ax.bar(methods, means, color=["#4878d0", "#ee854a"][: len(methods)])
    for i, m in enumerate(methods):
        pts = [r.iou for r in report.records if r.method == m]
        jitter = (np.arange(len(pts)) % 7 - 3) * 0.02
        ax.plot(i + jitter, pts, ".", color="k", alpha=0.35, markersize=4)
        ax.text(i, means[i] + 0.02, f"{means[i]:.3f}", ha="center")
    ax.set_ylabel("IoU")
    ax.set_ylim(0, 1.1)
    ax.set_title("Cutout IoU by method")
    fig.tight_layout()
    p = out / "iou_by_method.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(str(p))

    if len(methods) == 2:
        a, b = methods
        pairs = {}
        for r in report.records:
            pairs.setdefault((r.scene_seed, r.target), {})[r.method] = r.iou
        xs = [v[a] for v in pairs.values() if a in v and b in v]
        ys = [v[b] for v in pairs.values() if a in v and b in v]
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        ax.plot([0, 1], [0, 1], "--", color="gray", linewidth=1)
        ax.plot(xs, ys, "o", alpha=0.6)
        ax.set_xlabel(f"IoU {a}")
        ax.set_ylabel(f"IoU {b}")
        ax.set_title("Per-run method comparison")
        ax.set_xlim(-0.02, 1.02)
        ax.set_ylim(-0.02, 1.02)
        fig.tight_layout()
        p = out / "iou_pairs.png"
        fig.savefig(p, dpi=120)
        plt.close(fig)
        paths.append(str(p))
    return paths


# ------------------------------------------------------- proposal ablation


@dataclass(frozen=True)
class ProposalCorpus:
    rgb_features: np.ndarray  # (n, d_rgb)
    phog_features: np.ndarray  # (n, d_hog)
    labels: np.ndarray  # (n,) bool
    scene_ids: np.ndarray  # (n,) int


@dataclass(frozen=True)
class AblationResult:
    recall_rgb: float
    recall_rgbp: float
    n_proposals: int
    n_positives: int

    @property
    def gap(self) -> float:
        return self.recall_rgbp - self.recall_rgb


def _jitter_rect(rect: RectProposal, rng: SplitMix64, frac: float, width: int, height: int) -> RectProposal:
    dx = int(round((rng.next_float() * 2 - 1) * frac * rect.w))
    dy = int(round((rng.next_float() * 2 - 1) * frac * rect.h))
    dw = int(round((rng.next_float() * 2 - 1) * frac * rect.w))
    dh = int(round((rng.next_float() * 2 - 1) * frac * rect.h))
    x = min(max(0, rect.x + dx), width - 4)
    y = min(max(0, rect.y + dy), height - 4)
    w = max(4, min(rect.w + dw, width - x))
    h = max(4, min(rect.h + dh, height - y))
    return RectProposal(x, y, w, h)


def scene_proposals(scene, spec: SceneSpec, seed: int) -> list[RectProposal]:
    """Proposal mix for one scene: near-ground-truth jitters (positives),
    jittered look-alike distractor boxes (hard negatives), and a sliding grid."""
    rng = SplitMix64(seed)
    props = []
    for rect in scene.gt_rects:
        for _ in range(8):
            props.append(_jitter_rect(rect, rng, 0.04, spec.width, spec.height))
        for _ in range(6):
            props.append(_jitter_rect(rect, rng, 0.18, spec.width, spec.height))
    for dm in scene.distractor_masks:
        ys, xs = np.nonzero(dm.labels)
        drect = RectProposal(
            int(xs.min()), int(ys.min()), int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1)
        )
        for _ in range(12):
            props.append(_jitter_rect(drect, rng, 0.08, spec.width, spec.height))
    scale_hi = min(64, spec.width, spec.height)
    props.extend(gen_proposals(scene.image, [48, scale_hi], 0.5, [0.8, 1.25]))
    return props


def build_proposal_corpus(
    spec_grid, noise: OracleNoise, cfg: HogConfig = HogConfig(), proposal_seed: int = 77
) -> ProposalCorpus:
    """Scenes -> proposals -> per-proposal RGB descriptors and P-map HoGs."""
    rgb_rows, phog_rows, label_rows, scene_ids = [], [], [], []
    for i, spec in enumerate(spec_grid):
        scene = gen_scene(spec)
        gt_union = np.zeros((spec.height, spec.width), dtype=bool)
        for m in scene.gt_masks:
            gt_union |= m.labels
        scene_noise = replace(noise, seed=noise.seed + spec.seed)
        pmap = oracle_pmap(CutoutMask(gt_union), scene.distractor_masks, scene_noise)
        props = scene_proposals(scene, spec, proposal_seed + i)
        labels = label_samples(props, scene.gt_rects, 0.8)
        for rect in props:
            rgb_rows.append(rgb_descriptor(crop(scene.image, rect), cfg))
            phog_rows.append(hog(crop(pmap, rect).values, cfg))
        label_rows.append(labels)
        scene_ids.extend([i] * len(props))
    return ProposalCorpus(
        rgb_features=np.array(rgb_rows),
        phog_features=np.array(phog_rows),
        labels=np.concatenate(label_rows),
        scene_ids=np.array(scene_ids),
    )


def _rebalanced(x: np.ndarray, y: np.ndarray):
    """Duplicate positive rows so the sampling stream is roughly 1:3."""
    pos = np.nonzero(y == 1)[0]
    if len(pos) == 0:
        return x, y
    reps = max(1, int((y == -1).sum() / len(pos) / 3))
    if reps == 1:
        return x, y
    return (
        np.concatenate([x] + [x[pos]] * (reps - 1)),
        np.concatenate([y] + [y[pos]] * (reps - 1)),
    )


def proposal_scoring_ablation(
    corpus: ProposalCorpus,
    pca_dim: int = 128,
    train_scene_frac: float = 0.7,
    lam: float = 1e-4,
    epochs: int = 20,
    seed: int = 5,
) -> AblationResult:
    """Train RGB-only and RGB-P classifiers on the same corpus and compare
    balanced recall on held-out scenes."""
    n_scenes = int(corpus.scene_ids.max()) + 1
    cut = max(1, int(round(n_scenes * train_scene_frac)))
    train = corpus.scene_ids < cut
    test = ~train
    y = np.where(corpus.labels, 1.0, -1.0)

    pca = pca_fit(corpus.phog_features[train], pca_dim)
    projected = (corpus.phog_features - pca.mean) @ pca.basis.T
    rgbp = np.hstack([corpus.rgb_features, projected])

    recalls = {}
    for tag, feats in (("rgb", corpus.rgb_features), ("rgbp", rgbp)):
        xtr, ytr = _rebalanced(feats[train], y[train])
        model = svm_train(xtr, ytr, lam=lam, epochs=epochs, seed=seed)
        pred = svm_score(model, feats[test]) > 0
        recalls[tag] = balanced_recall(list(zip(pred, corpus.labels[test])))

    return AblationResult(
        recall_rgb=recalls["rgb"],
        recall_rgbp=recalls["rgbp"],
        n_proposals=len(corpus.labels),
        n_positives=int(corpus.labels.sum()),
    )
