"""Deterministic cluttered-scene generator plus an oracle P-map degrader.

Scenes contain procedural chair-like silhouettes (back + seat + two thin legs)
so ground-truth masks have the thin structures that stress mask extraction.
Distractors are extra silhouettes not present in the ground truth; with
palette_overlap they are drawn from the target's own color distribution, the
regime where color models alone cannot separate foreground from background.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, PlacementFailed, ValueOutOfRange
from .imagecore import CutoutMask, ProbMap, RectProposal, RgbImage
from .rng import SplitMix64

BACKGROUND_KINDS = ("flat", "gradient", "texture")

# shape boxes span this fraction range of the canvas' smaller dimension
_BOX_FRAC_LO = 0.26
_BOX_FRAC_HI = 0.38
_PLACEMENT_ATTEMPTS = 1000
_PALETTE_JITTER = 8
# minimum RGB distance between the target palette and the background
_TARGET_CONTRAST = 110.0


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    n_targets: int = 1
    n_distractors: int = 0
    palette_overlap: float = 0.0
    background_kind: str = "flat"
    seed: int = 0

    def __post_init__(self):
        if self.width < 16 or self.height < 16:
            raise ValueOutOfRange("scene canvas must be at least 16x16")
        if self.n_targets < 1:
            raise ValueOutOfRange("n_targets must be >= 1")
        if self.n_distractors < 0:
            raise ValueOutOfRange("n_distractors must be >= 0")
        if not 0.0 <= self.palette_overlap <= 1.0:
            raise ValueOutOfRange("palette_overlap must lie in [0, 1]")
        if self.background_kind not in BACKGROUND_KINDS:
            raise ValueOutOfRange(f"background_kind must be one of {BACKGROUND_KINDS}")


@dataclass(frozen=True)
class OracleNoise:
    blur_radius: int = 0
    flip_noise: float = 0.0
    leak: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.blur_radius < 0:
            raise ValueOutOfRange("blur_radius must be >= 0")
        if not 0.0 <= self.flip_noise <= 1.0:
            raise ValueOutOfRange("flip_noise must lie in [0, 1]")
        if not 0.0 <= self.leak <= 1.0:
            raise ValueOutOfRange("leak must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class SynthScene:
    image: RgbImage
    gt_masks: tuple[CutoutMask, ...]
    gt_rects: tuple[RectProposal, ...]
    distractor_masks: tuple[CutoutMask, ...]


def _chair_silhouette(bw: int, bh: int, rng: SplitMix64) -> np.ndarray:
    """Boolean silhouette filling a bw x bh box: back, seat, two legs."""
    m = np.zeros((bh, bw), dtype=bool)
    seat_top = int(round(bh * rng.uniform(0.38, 0.50)))
    seat_thick = max(2, int(round(bh * rng.uniform(0.14, 0.20))))
    back_thick = max(2, int(round(bw * rng.uniform(0.14, 0.22))))
    leg_thick = max(2, int(round(bw * rng.uniform(0.08, 0.14))))
    back_on_left = rng.randint(2) == 0

    seat_bot = min(bh - 2, seat_top + seat_thick)
    m[seat_top:seat_bot, :] = True
    if back_on_left:
        m[0:seat_bot, 0:back_thick] = True
    else:
        m[0:seat_bot, bw - back_thick : bw] = True
    inset = max(0, int(round(bw * 0.04)))
    m[seat_bot:bh, inset : inset + leg_thick] = True
    m[seat_bot:bh, bw - inset - leg_thick : bw - inset] = True
    # guarantee the tight bbox equals the box: seat spans full width, back
    # touches the top row, legs touch the bottom row
    m[0, 0 if back_on_left else bw - 1] = True
    m[bh - 1, inset] = True
    return m


def _pick_color(rng: SplitMix64, lo: int = 30, hi: int = 225) -> np.ndarray:
    return np.array([rng.randint(hi - lo) + lo for _ in range(3)], dtype=np.int64)


def _segment_distance(c: np.ndarray, seg: tuple[np.ndarray, np.ndarray]) -> float:
    """Euclidean distance from color c to the RGB segment [a, b]."""
    a, b = np.asarray(seg[0], dtype=np.float64), np.asarray(seg[1], dtype=np.float64)
    d = b - a
    denom = float(d @ d)
    t = 0.0 if denom == 0 else float(np.clip((c - a) @ d / denom, 0.0, 1.0))
    return float(np.linalg.norm(c - (a + t * d)))


def _pick_color_away_from(rng: SplitMix64, segments, min_dist: float) -> np.ndarray:
    for _ in range(200):
        c = _pick_color(rng)
        if all(_segment_distance(c, seg) >= min_dist for seg in segments):
            return c
    return c


def _paint_background(spec: SceneSpec, rng: SplitMix64):
    """Returns (canvas int64 (h,w,3), color segments the background spans)."""
    h, w = spec.height, spec.width
    if spec.background_kind == "flat":
        base = _pick_color(rng, 40, 215)
        return np.broadcast_to(base, (h, w, 3)).astype(np.int64).copy(), [(base, base)]
    if spec.background_kind == "gradient":
        c0, c1 = _pick_color(rng), _pick_color(rng)
        horizontal = rng.randint(2) == 0
        t = (np.arange(w) / max(1, w - 1))[None, :, None] if horizontal else (
            np.arange(h) / max(1, h - 1)
        )[:, None, None]
        canvas = np.rint(c0 + (c1 - c0) * t).astype(np.int64) + np.zeros((h, w, 3), dtype=np.int64)
        return canvas, [(c0, c1)]
    base = _pick_color(rng, 55, 200)
    jitter = np.rint((rng.fill_float(h * w * 3) * 2 - 1) * 25).astype(np.int64)
    return base + jitter.reshape(h, w, 3), [(base, base)]


def _paint_shape(canvas: np.ndarray, mask: np.ndarray, y: int, x: int, base: np.ndarray, rng: SplitMix64):
    bh, bw = mask.shape
    jitter = np.rint((rng.fill_float(bh * bw * 3) * 2 - 1) * _PALETTE_JITTER).astype(np.int64)
    patch = base + jitter.reshape(bh, bw, 3)
    region = canvas[y : y + bh, x : x + bw]
    region[mask] = patch[mask]


def gen_scene(spec: SceneSpec) -> SynthScene:
    """Generate a scene; byte-identical for identical specs."""
    rng = SplitMix64(spec.seed)
    h, w = spec.height, spec.width
    canvas, bg_segments = _paint_background(spec, rng)

    target_color = _pick_color_away_from(rng, bg_segments, _TARGET_CONTRAST)
    n_look = int(round(spec.palette_overlap * spec.n_distractors))

    lo = max(8, int(round(min(w, h) * _BOX_FRAC_LO)))
    hi = max(lo + 1, int(round(min(w, h) * _BOX_FRAC_HI)))

    placed_boxes: list[tuple[int, int, int, int]] = []
    occupied = np.zeros((h, w), dtype=bool)

    def dilate(mask: np.ndarray) -> np.ndarray:
        out = mask.copy()
        out[1:, :] |= mask[:-1, :]
        out[:-1, :] |= mask[1:, :]
        out[:, 1:] |= mask[:, :-1]
        out[:, :-1] |= mask[:, 1:]
        return out

    def commit(sil: np.ndarray, y: int, x: int) -> np.ndarray:
        full = np.zeros((h, w), dtype=bool)
        full[y : y + sil.shape[0], x : x + sil.shape[1]] = sil
        occupied[:] |= dilate(full)
        return full

    def place_target() -> tuple[np.ndarray, int, int]:
        # targets keep disjoint bounding boxes so gt rects stay tidy
        for _ in range(_PLACEMENT_ATTEMPTS):
            bw = lo + rng.randint(hi - lo)
            bh = lo + rng.randint(hi - lo)
            if bw + 2 > w or bh + 2 > h:
                continue
            x = 1 + rng.randint(w - bw - 1)
            y = 1 + rng.randint(h - bh - 1)
            clear = all(
                x + bw + 1 <= px or px + pw + 1 <= x or y + bh + 1 <= py or ph + py + 1 <= y
                for (px, py, pw, ph) in placed_boxes
            )
            if clear:
                placed_boxes.append((x, y, bw, bh))
                return _chair_silhouette(bw, bh, rng), y, x
        raise PlacementFailed(
            f"could not place target after {_PLACEMENT_ATTEMPTS} attempts "
            f"({len(placed_boxes)} shapes placed on {w}x{h})"
        )

    def place_distractor(anchor: tuple[int, int, int, int]) -> tuple[np.ndarray, int, int]:
        # distractors cluster around a target and only need pixel-disjoint
        # silhouettes, so their parts interleave with the target's box — the
        # clutter that defeats rectangle-initialized color models. Tight
        # offsets are tried first; the search window relaxes outward every
        # 50 failed attempts.
        ax, ay, aw, ah = anchor
        for attempt in range(_PLACEMENT_ATTEMPTS):
            bw = lo + rng.randint(hi - lo)
            bh = lo + rng.randint(hi - lo)
            if bw + 2 > w or bh + 2 > h:
                continue
            slack = 2 + (attempt // 50) * 4
            x = ax - bw - slack + rng.randint(aw + bw + 2 * slack + 1)
            y = ay - bh - slack + rng.randint(ah + bh + 2 * slack + 1)
            x = min(max(x, 1), w - bw - 1)
            y = min(max(y, 1), h - bh - 1)
            sil = _chair_silhouette(bw, bh, rng)
            if not (occupied[y : y + bh, x : x + bw] & sil).any():
                return sil, y, x
        raise PlacementFailed(
            f"could not place distractor after {_PLACEMENT_ATTEMPTS} attempts "
            f"({len(placed_boxes)} shapes placed on {w}x{h})"
        )

    gt_masks, gt_rects = [], []
    for _ in range(spec.n_targets):
        sil, y, x = place_target()
        _paint_shape(canvas, sil, y, x, target_color, rng)
        full = commit(sil, y, x)
        ys, xs = np.nonzero(full)
        gt_masks.append(CutoutMask(full))
        gt_rects.append(
            RectProposal(int(xs.min()), int(ys.min()), int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1))
        )

    distractor_masks = []
    for i in range(spec.n_distractors):
        anchor = placed_boxes[i % spec.n_targets]
        sil, y, x = place_distractor(anchor)
        if i < n_look:
            color = target_color
        else:
            color = _pick_color_away_from(rng, bg_segments + [(target_color, target_color)], 40)
        _paint_shape(canvas, sil, y, x, color, rng)
        distractor_masks.append(CutoutMask(commit(sil, y, x)))

    image = RgbImage(np.clip(canvas, 0, 255).astype(np.uint8))
    return SynthScene(image, tuple(gt_masks), tuple(gt_rects), tuple(distractor_masks))


def _box_blur(values: np.ndarray, radius: int) -> np.ndarray:
    """Zero-padded box blur with a constant (2r+1)^2 divisor."""
    if radius == 0:
        return values
    k = 2 * radius + 1

    def window_sum(arr, axis):
        n = arr.shape[axis]
        cs = np.cumsum(arr, axis=axis)
        cs = np.concatenate([np.zeros_like(np.take(cs, [0], axis=axis)), cs], axis=axis)
        hi = np.minimum(np.arange(n) + radius + 1, n)
        lo = np.maximum(np.arange(n) - radius, 0)
        return np.take(cs, hi, axis=axis) - np.take(cs, lo, axis=axis)

    return window_sum(window_sum(values, 0), 1) / float(k * k)


def oracle_pmap(gt: CutoutMask, distractor_masks, noise: OracleNoise) -> ProbMap:
    """Degrade a ground-truth mask into a plausible P-map.

    Leak paints a probability floor over distractor regions (the residual
    confusion a class-specific DNN shows on look-alike objects), then box blur
    softens edges and uniform noise perturbs every pixel.
    """
    p = gt.labels.astype(np.float64)
    for dm in distractor_masks:
        if dm.width != gt.width or dm.height != gt.height:
            raise DimensionMismatch(
                f"distractor mask {dm.width}x{dm.height} vs gt {gt.width}x{gt.height}"
            )
        p[dm.labels] = np.maximum(p[dm.labels], noise.leak)
    p = _box_blur(p, noise.blur_radius)
    if noise.flip_noise > 0:
        rng = SplitMix64(noise.seed)
        u = rng.fill_float(p.size).reshape(p.shape) * 2.0 - 1.0
        p = p + u * noise.flip_noise
    return ProbMap(np.clip(p, 0.0, 1.0))
