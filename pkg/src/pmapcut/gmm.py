"""Color Gaussian mixtures over RGB pixels: seeded hard-EM fit and evaluation.

Fitting follows the classic segmentation recipe: k-means++ seeding, then
alternate max-posterior assignment with weight/mean/covariance refits until
assignments stabilize. Components that lose all pixels are dropped. Every
covariance gets a delta*I floor so single-color segments stay well posed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput
from .rng import SplitMix64

COV_DELTA = 1e-3  # [0,255]^2 units
LIKELIHOOD_FLOOR = 1e-30
MAX_ROUNDS = 50
_LOG2PI3 = 3.0 * np.log(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class ColorGmm:
    """Mixture of 3-D Gaussians; immutable after fit."""

    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, 3)
    covariances: np.ndarray  # (K, 3, 3)
    fit_objectives: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.asarray(self.means, dtype=np.float64)
        cov = np.asarray(self.covariances, dtype=np.float64)
        if w.ndim != 1 or mu.shape != (w.size, 3) or cov.shape != (w.size, 3, 3):
            raise ValueError("inconsistent GMM parameter shapes")
        if w.size < 1 or abs(w.sum() - 1.0) > 1e-9 or (w < 0).any():
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        inv = np.linalg.inv(cov)
        _, logdet = np.linalg.slogdet(cov)
        for name, val in (("weights", w), ("means", mu), ("covariances", cov)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "_inv", inv)
        object.__setattr__(self, "_logdet", logdet)

    @property
    def n_components(self) -> int:
        return self.weights.size

    def log_component_densities(self, pixels: np.ndarray) -> np.ndarray:
        """(N, K) log N(x; mean_k, cov_k)."""
        x = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
        out = np.empty((x.shape[0], self.n_components))
        for k in range(self.n_components):
            d = x - self.means[k]
            maha = ((d @ self._inv[k]) * d).sum(axis=1)
            out[:, k] = -0.5 * (maha + self._logdet[k] + _LOG2PI3)
        return out

    def likelihoods(self, pixels: np.ndarray) -> np.ndarray:
        """(N,) mixture densities, floored at 1e-30."""
        logp = self.log_component_densities(pixels)
        dens = np.exp(logp) @ self.weights
        return np.maximum(dens, LIKELIHOOD_FLOOR)


def likelihood(gmm: ColorGmm, pixel) -> float:
    """Mixture density at one RGB pixel; always finite and >= 1e-30."""
    return float(gmm.likelihoods(np.asarray(pixel, dtype=np.float64).reshape(1, 3))[0])


def _kmeanspp_centers(x: np.ndarray, k: int, rng: SplitMix64) -> np.ndarray:
    n = x.shape[0]
    centers = [x[rng.randint(n)]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.randint(n)
        else:
            r = rng.next_float() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, n - 1)
        centers.append(x[idx])
        d2 = np.minimum(d2, np.sum((x - centers[-1]) ** 2, axis=1))
    return np.array(centers, dtype=np.float64)


def _refit(x: np.ndarray, assign: np.ndarray, k: int):
    """M-step; returns (weights, means, covs) over surviving components."""
    n = x.shape[0]
    weights, means, covs = [], [], []
    for c in range(k):
        sel = x[assign == c]
        if sel.shape[0] == 0:
            continue
        mu = sel.mean(axis=0)
        d = sel - mu
        cov = (d.T @ d) / sel.shape[0] + COV_DELTA * np.eye(3)
        weights.append(sel.shape[0] / n)
        means.append(mu)
        covs.append(cov)
    w = np.array(weights)
    return w / w.sum(), np.array(means), np.array(covs)


def fit(pixels, K: int, seed: int) -> ColorGmm:
    """Fit a K-component mixture by k-means++ init and hard EM.

    Deterministic in (pixels, K, seed). The per-round negative complete-data
    log-likelihood is recorded on the model as fit_objectives.
    """
    x = np.asarray(pixels, dtype=np.float64).reshape(-1, 3)
    if x.shape[0] == 0:
        raise EmptyInput("cannot fit a GMM to zero pixels")
    if K < 1:
        raise ValueError("K must be >= 1")
    rng = SplitMix64(seed)

    centers = _kmeanspp_centers(x, K, rng)
    d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    assign = np.argmin(d2, axis=1)
    weights, means, covs = _refit(x, assign, K)

    objectives = []
    prev_assign = None
    for _ in range(MAX_ROUNDS):
        model = ColorGmm(weights, means, covs)
        logp = model.log_component_densities(x) + np.log(model.weights)[None, :]
        assign = np.argmax(logp, axis=1)
        obj = float(-logp[np.arange(x.shape[0]), assign].sum())
        if objectives:
            # hard-EM objective must not increase (delta-regularized M-step
            # allows float-level slack only)
            assert obj <= objectives[-1] + 1e-9 * max(1.0, abs(objectives[-1]))
        objectives.append(obj)
        if prev_assign is not None and np.array_equal(assign, prev_assign):
            break
        prev_assign = assign
        weights, means, covs = _refit(x, assign, model.n_components)

    return ColorGmm(weights, means, covs, fit_objectives=tuple(objectives))
