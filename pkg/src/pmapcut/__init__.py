"""P-map guided object cutout: graph-cut segmentation steered by per-pixel
instance probability maps, proposal scoring over RGB-P features, and a
synthetic-clutter benchmark harness."""

from .cutout import (
    CutoutParams,
    CutoutTrace,
    initial_mask,
    plain_grabcut,
    pmap_grabcut,
    pmap_likelihoods,
)
from .imagecore import (
    CutoutMask,
    ProbMap,
    RectProposal,
    RgbImage,
    crop,
    load_image,
    load_mask,
    load_pmap,
    rect_iou,
    save_image,
    save_mask,
    save_pmap,
)
from .metrics import balanced_recall, mask_iou, topk_accuracy
from .mincut import CutResult, GridEnergy, build_grid_energy, min_cut
from .synth import OracleNoise, SceneSpec, SynthScene, gen_scene, oracle_pmap

__version__ = "0.1.0"

__all__ = [
    "CutoutMask",
    "CutoutParams",
    "CutoutTrace",
    "CutResult",
    "GridEnergy",
    "OracleNoise",
    "ProbMap",
    "RectProposal",
    "RgbImage",
    "SceneSpec",
    "SynthScene",
    "balanced_recall",
    "build_grid_energy",
    "crop",
    "gen_scene",
    "initial_mask",
    "load_image",
    "load_mask",
    "load_pmap",
    "mask_iou",
    "min_cut",
    "oracle_pmap",
    "plain_grabcut",
    "pmap_grabcut",
    "pmap_likelihoods",
    "rect_iou",
    "save_image",
    "save_mask",
    "save_pmap",
    "topk_accuracy",
    "__version__",
]
