"""P-map guided iterative graph-cut cutout, plus plain GrabCut as baseline.

The P-map path converts per-pixel probabilities into likelihoods with an
exponent alpha, cuts an initial mask from them alone, then alternates color
model refits with cuts whose unaries blend the color term and the P-map term:

    CP_fg = gmm_fg(z) * exp(-w * P_bg)      unary_fg = -ln gmm_fg(z) + w * P_bg
    CP_bg = gmm_bg(z) * exp(-w * P_fg)      unary_bg = -ln gmm_bg(z) + w * P_fg

with w = b / k decaying over iterations k = 1, 2, ... so the color models
take over once they are trustworthy. The baseline keeps the classic recipe:
models seeded from inside/outside the rectangle, outside clamped background.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gmm
from .errors import EmptyBackground, EmptyForeground, OutOfBounds, ValueOutOfRange
from .imagecore import CutoutMask, ProbMap, RectProposal, RgbImage, require_same_shape
from .mincut import GridEnergy, build_grid_energy, contrast_weights, min_cut

DEFAULT_SEED = 1


@dataclass(frozen=True)
class CutoutParams:
    alpha: float = 2.3
    b: float = 25.0
    max_iters: int = 10
    gamma: float = 50.0
    K: int = 5
    eps_prob: float = 1e-6
    converge_frac: float = 0.001
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueOutOfRange("alpha must be > 0")
        if self.b <= 0:
            raise ValueOutOfRange("b must be > 0")
        if self.max_iters < 1:
            raise ValueOutOfRange("max_iters must be >= 1")
        if self.gamma < 0:
            raise ValueOutOfRange("gamma must be >= 0")
        if self.K < 1:
            raise ValueOutOfRange("K must be >= 1")
        if not 0.0 < self.eps_prob < 0.5:
            raise ValueOutOfRange("eps_prob must lie in (0, 0.5)")
        if not 0.0 <= self.converge_frac <= 1.0:
            raise ValueOutOfRange("converge_frac must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class CutoutIteration:
    k: int
    w: float
    energy: float
    changed_pixels: int
    mask: CutoutMask
    energy_model: GridEnergy | None = field(default=None, repr=False)


@dataclass(frozen=True, eq=False)
class CutoutTrace:
    initial_mask: CutoutMask
    records: tuple[CutoutIteration, ...]

    @property
    def iterations(self) -> int:
        return len(self.records)


def pmap_likelihoods(pmap: ProbMap, alpha: float, eps: float):
    """Foreground/background likelihoods p^alpha and (1-p)^alpha.

    Probabilities are clamped into [eps, 1-eps] first so the negative logs
    the solver needs stay finite.
    """
    p = np.clip(pmap.values.astype(np.float64), eps, 1.0 - eps)
    return p**alpha, (1.0 - p) ** alpha


def _check_mask_sides(labels: np.ndarray, where: str):
    n_fg = int(labels.sum())
    if n_fg == 0:
        raise EmptyForeground(f"no foreground pixels {where}")
    if n_fg == labels.size:
        raise EmptyBackground(f"no background pixels {where}")


def initial_mask(image: RgbImage, pmap: ProbMap, params: CutoutParams) -> CutoutMask:
    """Cut a binary mask from the P-map alone (data term = P-map likelihoods)."""
    require_same_shape(image, pmap, "image and P-map")
    pf, pb = pmap_likelihoods(pmap, params.alpha, params.eps_prob)
    energy = build_grid_energy(image, -np.log(pf), -np.log(pb), params.gamma)
    mask = min_cut(energy).mask
    _check_mask_sides(mask.labels, "in the initial P-map cut")
    return mask


# color models are fit on a deterministic stride subsample past this many
# pixels; a 5-component mixture gains nothing from more
GMM_FIT_CAP = 8192


def _fit_sample(pixels: np.ndarray) -> np.ndarray:
    n = pixels.shape[0]
    if n <= GMM_FIT_CAP:
        return pixels
    step = -(-n // GMM_FIT_CAP)
    return pixels[::step]


def _fit_models(pixels_flat: np.ndarray, labels: np.ndarray, params: CutoutParams, where: str):
    _check_mask_sides(labels, where)
    flat = labels.ravel()
    fg_model = gmm.fit(_fit_sample(pixels_flat[flat]), params.K, params.seed)
    bg_model = gmm.fit(_fit_sample(pixels_flat[~flat]), params.K, params.seed)
    return fg_model, bg_model


def _shift_nonnegative(u_fg: np.ndarray, u_bg: np.ndarray):
    """Add one common constant so both cost arrays are >= 0.

    Tight color models have densities above 1, so -ln goes negative; a shared
    shift changes every labeling's energy by the same amount and preserves
    the argmin.
    """
    low = min(float(u_fg.min()), float(u_bg.min()), 0.0)
    return u_fg - low, u_bg - low


def pmap_grabcut(
    image: RgbImage,
    pmap: ProbMap,
    params: CutoutParams = CutoutParams(),
    record_energies: bool = False,
) -> tuple[CutoutMask, CutoutTrace]:
    """P-map guided iterative cutout; returns the final mask and a full trace.

    record_energies keeps each iteration's GridEnergy on the trace so tests
    can verify per-iteration optimality; off by default (it is large).
    """
    require_same_shape(image, pmap, "image and P-map")
    pf, pb = pmap_likelihoods(pmap, params.alpha, params.eps_prob)
    pixels_flat = image.pixels.reshape(-1, 3).astype(np.float64)

    mask = initial_mask(image, pmap, params)
    fg_model, bg_model = _fit_models(pixels_flat, mask.labels, params, "after the initial cut")

    records: list[CutoutIteration] = []
    first = mask
    total = mask.labels.size
    for k in range(1, params.max_iters + 1):
        w = params.b / k
        u_fg = -np.log(fg_model.likelihoods(pixels_flat)).reshape(pf.shape) + w * pb
        u_bg = -np.log(bg_model.likelihoods(pixels_flat)).reshape(pf.shape) + w * pf
        u_fg, u_bg = _shift_nonnegative(u_fg, u_bg)
        energy = build_grid_energy(image, u_fg, u_bg, params.gamma)
        cut = min_cut(energy)
        changed = int((cut.mask.labels != mask.labels).sum())
        records.append(
            CutoutIteration(
                k=k,
                w=w,
                energy=cut.energy,
                changed_pixels=changed,
                mask=cut.mask,
                energy_model=energy if record_energies else None,
            )
        )
        mask = cut.mask
        fg_model, bg_model = _fit_models(pixels_flat, mask.labels, params, f"at iteration {k}")
        if changed / total < params.converge_frac:
            break

    return mask, CutoutTrace(initial_mask=first, records=tuple(records))


def _neighbor_weight_sum(indicator: np.ndarray, w_right, w_down, w_dr, w_dl) -> np.ndarray:
    """Per-pixel total n-link weight toward pixels where indicator is set."""
    ind = indicator.astype(np.float64)
    acc = np.zeros_like(ind)
    acc[:, :-1] += w_right * ind[:, 1:]
    acc[:, 1:] += w_right * ind[:, :-1]
    acc[:-1, :] += w_down * ind[1:, :]
    acc[1:, :] += w_down * ind[:-1, :]
    acc[:-1, :-1] += w_dr * ind[1:, 1:]
    acc[1:, 1:] += w_dr * ind[:-1, :-1]
    acc[:-1, 1:] += w_dl * ind[1:, :-1]
    acc[1:, :-1] += w_dl * ind[:-1, 1:]
    return acc


def plain_grabcut_with_iterations(
    image: RgbImage, rect: RectProposal, params: CutoutParams = CutoutParams()
) -> tuple[CutoutMask, int]:
    """Classic rectangle-initialized GrabCut; also reports iterations used."""
    if not rect.inside(image.width, image.height):
        raise OutOfBounds(
            f"rect {rect.x},{rect.y},{rect.w},{rect.h} exceeds {image.width}x{image.height} image"
        )
    h, w = image.height, image.width
    if rect.w == w and rect.h == h:
        raise EmptyBackground("rect covers the whole image; no pixels left to model background")

    ys, ye = rect.y, rect.y + rect.h
    xs, xe = rect.x, rect.x + rect.w
    inside = np.zeros((h, w), dtype=bool)
    inside[ys:ye, xs:xe] = True
    pixels = image.pixels.astype(np.float64)
    inside_flat = pixels[ys:ye, xs:xe].reshape(-1, 3)

    fg_model = gmm.fit(_fit_sample(inside_flat), params.K, params.seed)
    bg_model = gmm.fit(_fit_sample(pixels[~inside]), params.K, params.seed)

    # outside-rect pixels are hard background: the cut runs on the rect
    # subgrid, with n-links crossing the rect boundary folded into unary_fg
    w_right, w_down, w_dr, w_dl, _ = contrast_weights(image, params.gamma)
    boundary = _neighbor_weight_sum(~inside, w_right, w_down, w_dr, w_dl)[ys:ye, xs:xe]
    sub_right = w_right[ys:ye, xs : xe - 1]
    sub_down = w_down[ys : ye - 1, xs:xe]
    sub_dr = w_dr[ys : ye - 1, xs : xe - 1]
    sub_dl = w_dl[ys : ye - 1, xs : xe - 1]

    mask_sub = np.ones((rect.h, rect.w), dtype=bool)
    iterations = 0
    for k in range(1, params.max_iters + 1):
        u_fg = -np.log(fg_model.likelihoods(inside_flat)).reshape(rect.h, rect.w)
        u_bg = -np.log(bg_model.likelihoods(inside_flat)).reshape(rect.h, rect.w)
        u_fg, u_bg = _shift_nonnegative(u_fg, u_bg)
        energy = GridEnergy(u_fg + boundary, u_bg, sub_right, sub_down, sub_dr, sub_dl)
        new_sub = min_cut(energy).mask.labels
        changed = int((new_sub != mask_sub).sum())
        mask_sub = new_sub
        iterations = k

        if not mask_sub.any():
            raise EmptyForeground(f"rectangle GrabCut collapsed to background at iteration {k}")
        fg_model = gmm.fit(_fit_sample(inside_flat[mask_sub.ravel()]), params.K, params.seed)
        bg_pixels = np.concatenate([pixels[~inside], inside_flat[~mask_sub.ravel()]])
        bg_model = gmm.fit(_fit_sample(bg_pixels), params.K, params.seed)
        if changed / mask_sub.size < params.converge_frac:
            break

    full = np.zeros((h, w), dtype=bool)
    full[ys:ye, xs:xe] = mask_sub
    return CutoutMask(full), iterations


def plain_grabcut(image: RgbImage, rect: RectProposal, params: CutoutParams = CutoutParams()) -> CutoutMask:
    """Classic GrabCut from a bounding rectangle (no P-map prior)."""
    mask, _ = plain_grabcut_with_iterations(image, rect, params)
    return mask
