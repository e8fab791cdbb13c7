import numpy as np
import pytest

from pmapcut.detect import (
    DetectorModel,
    HogConfig,
    LinearSvm,
    aggregate_pmap,
    bilinear_resize,
    build_rgbp_features,
    gen_proposals,
    hog,
    label_samples,
    load_model,
    load_proposals,
    nms,
    pca_fit,
    pca_project,
    save_model,
    save_proposals,
    svm_objective,
    svm_score,
    svm_train,
    write_detections,
)
from pmapcut.errors import (
    DimensionMismatch,
    ParseError,
    RankTooHigh,
    ScaleTooLarge,
    SingleClass,
    ValueOutOfRange,
)
from pmapcut.imagecore import ProbMap, RectProposal, RgbImage


def blank_image(w, h, value=0):
    return RgbImage(np.full((h, w, 3), value, dtype=np.uint8))


# ------------------------------------------------------------------ proposals


def test_single_proposal_covers_image():
    props = gen_proposals(blank_image(64, 64), [64], 1.0, [1.0])
    assert props == [RectProposal(0, 0, 64, 64)]


def test_proposals_stride_grid():
    props = gen_proposals(blank_image(128, 64), [64], 0.5, [1.0])
    assert [p.x for p in props] == [0, 32, 64]
    assert all(p.y == 0 and p.w == 64 and p.h == 64 for p in props)


def test_scale_too_large():
    with pytest.raises(ScaleTooLarge):
        gen_proposals(blank_image(64, 64), [256], 1.0, [1.0])


def test_proposal_ordering_scale_then_rowmajor():
    props = gen_proposals(blank_image(96, 96), [48, 96], 1.0, [1.0])
    assert props[0].w == 48 and props[-1].w == 96
    small = [p for p in props if p.w == 48]
    assert [(p.y, p.x) for p in small] == sorted((p.y, p.x) for p in small)


def test_load_proposals_roundtrip(tmp_path):
    p = tmp_path / "props.jsonl"
    p.write_text('{"x":0,"y":0,"w":10,"h":10}\n{"x":3,"y":4,"w":5,"h":6,"confidence":0.5}\n')
    props = load_proposals(p)
    assert props[0] == RectProposal(0, 0, 10, 10)
    assert props[1].confidence == 0.5

    out = tmp_path / "echo.jsonl"
    save_proposals(out, props)
    assert load_proposals(out) == props


def test_load_proposals_empty_file(tmp_path):
    p = tmp_path / "empty.jsonl"
    p.write_text("")
    assert load_proposals(p) == []


def test_load_proposals_zero_width(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"x":0,"y":0,"w":0,"h":10}\n')
    with pytest.raises(ParseError):
        load_proposals(p)


def test_label_samples_rules():
    gt = [RectProposal(0, 0, 10, 10)]
    props = [RectProposal(0, 0, 10, 10), RectProposal(0, 0, 10, 5), RectProposal(50, 50, 5, 5)]
    labels = label_samples(props, gt, 0.8)
    assert labels.tolist() == [True, False, False]
    assert label_samples(props, [], 0.8).tolist() == [False, False, False]


def test_label_samples_monotone_in_thresh():
    rng = np.random.default_rng(2)
    gt = [RectProposal(10, 10, 30, 30)]
    props = [
        RectProposal(int(rng.integers(0, 30)), int(rng.integers(0, 30)), int(rng.integers(5, 40)), int(rng.integers(5, 40)))
        for _ in range(50)
    ]
    lo = label_samples(props, gt, 0.3)
    hi = label_samples(props, gt, 0.7)
    assert not (hi & ~lo).any()  # raising thresh never converts negative -> positive


# ------------------------------------------------------------------------ hog


def test_hog_dimension_formula():
    cfg = HogConfig()
    assert cfg.dimension == 7 * 7 * 2 * 2 * 9 == 1764
    assert hog(np.random.default_rng(0).random((64, 64)), cfg).shape == (1764,)
    wide = HogConfig(cell_size=16, block_size=2, n_bins=6, patch_size=64)
    assert hog(np.zeros((32, 32)), wide).shape == (wide.dimension,)
    assert wide.dimension == 3 * 3 * 2 * 2 * 6


def test_hog_constant_raster_all_zero():
    assert (hog(np.full((64, 64), 0.37)) == 0).all()


def test_hog_vertical_edge_hits_horizontal_bin():
    cfg = HogConfig()
    patch = np.zeros((64, 64))
    patch[:, 32:] = 1.0  # vertical step -> purely horizontal gradient, angle 0
    feats = hog(patch, cfg).reshape(cfg.blocks, cfg.blocks, cfg.block_size**2, cfg.n_bins)
    assert feats.sum() > 0
    off_bin = feats[:, :, :, 1:].sum()
    assert off_bin == pytest.approx(0.0, abs=1e-12)


def test_bilinear_resize_identity_and_constant():
    arr = np.random.default_rng(1).random((5, 7))
    assert np.array_equal(bilinear_resize(arr, 5, 7), arr)
    up = bilinear_resize(np.full((3, 3), 0.6), 9, 9)
    assert np.allclose(up, 0.6)


# ------------------------------------------------------------------------ pca


def test_pca_line_direction():
    t = np.array([-2.0, -1.0, 1.0, 2.0])
    samples = np.stack([t, t], axis=1)  # points on y = x
    model = pca_fit(samples, 1)
    direction = model.basis[0]
    assert np.allclose(np.abs(direction), [1 / np.sqrt(2), 1 / np.sqrt(2)], atol=1e-9)
    proj = pca_project(model, np.array([1.0, 1.0]))
    assert abs(abs(proj[0]) - np.sqrt(2)) < 1e-9


def test_pca_full_rank_lossless():
    rng = np.random.default_rng(3)
    x = rng.random((20, 6))
    model = pca_fit(x, 6)
    proj = pca_project(model, x)
    recon = model.mean + proj @ model.basis
    assert np.allclose(recon, x, atol=1e-6)


def test_pca_rank_too_high():
    with pytest.raises(RankTooHigh):
        pca_fit(np.random.default_rng(0).random((4, 10)), 4)  # r > n-1


def test_pca_variance_ordering():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(200, 8)) * np.array([5, 3, 2, 1.5, 1, 0.5, 0.2, 0.1])
    model = pca_fit(x, 5)
    var = pca_project(model, x).var(axis=0)
    assert (np.diff(var) <= 1e-6).all()


# ------------------------------------------------------------------------ svm


def separable_toy(n=40, seed=0):
    rng = np.random.default_rng(seed)
    pos = rng.normal([3.0, 0.0], 0.3, size=(n, 2))
    neg = rng.normal([-3.0, 0.0], 0.3, size=(n, 2))
    x = np.concatenate([pos, neg])
    y = np.concatenate([np.ones(n), -np.ones(n)])
    return x, y


def test_svm_separable_perfect_accuracy():
    x, y = separable_toy()
    model = svm_train(x, y, lam=1e-3, epochs=50, seed=3)
    pred = np.sign(svm_score(model, x))
    assert (pred == y).all()


def test_svm_single_class():
    x = np.random.default_rng(0).random((10, 3))
    with pytest.raises(SingleClass):
        svm_train(x, np.ones(10), lam=1e-3, epochs=5, seed=1)


def test_zero_model_scores_bias():
    model = LinearSvm(np.zeros(4), bias=0.7)
    assert svm_score(model, np.array([9.0, -3.0, 2.0, 1.0])) == 0.7


def test_svm_objective_never_worse_than_zero_model():
    rng = np.random.default_rng(7)
    for seed in range(5):
        x = rng.normal(size=(60, 5))
        y = np.where(rng.random(60) > 0.4, 1.0, -1.0)
        if (y == 1).all() or (y == -1).all():
            continue
        model = svm_train(x, y, lam=1e-2, epochs=8, seed=seed)
        obj = svm_objective(model.weights, model.bias, x, y, 1e-2)
        zero = svm_objective(np.zeros(5), 0.0, x, y, 1e-2)
        assert obj <= zero + 1e-12


def test_svm_deterministic():
    x, y = separable_toy(seed=2)
    a = svm_train(x, y, lam=1e-3, epochs=10, seed=9)
    b = svm_train(x, y, lam=1e-3, epochs=10, seed=9)
    assert np.array_equal(a.weights, b.weights) and a.bias == b.bias


# ------------------------------------------------------------------- features


def test_feature_lengths():
    cfg = HogConfig()
    img = blank_image(32, 40, value=128)
    rgb_only = build_rgbp_features(img, None, cfg, rgb_only=True)
    assert rgb_only.shape == (1764 + 48,)

    rng = np.random.default_rng(0)
    phogs = rng.random((40, cfg.dimension))
    pca = pca_fit(phogs, 16)
    pm = ProbMap(rng.random((40, 32)).astype(np.float32))
    full = build_rgbp_features(img, pm, cfg, pca_p=pca)
    assert full.shape == (1764 + 48 + 16,)


def test_pmap_changes_only_p_subvector():
    # gradient features cannot tell a zero fill from a one fill (both are
    # constant rasters), so locality is probed with a structured P-map
    cfg = HogConfig()
    rng = np.random.default_rng(1)
    img = RgbImage(rng.integers(0, 255, (40, 32, 3), dtype=np.uint8))
    pca = pca_fit(rng.random((30, cfg.dimension)), 8)
    flat = build_rgbp_features(img, ProbMap(np.zeros((40, 32), dtype=np.float32)), cfg, pca)
    half = np.zeros((40, 32), dtype=np.float32)
    half[:, 16:] = 1.0
    edged = build_rgbp_features(img, ProbMap(half), cfg, pca)
    d = 1764 + 48
    assert np.array_equal(flat[:d], edged[:d])
    assert not np.array_equal(flat[d:], edged[d:])


def test_feature_dimension_mismatch():
    cfg = HogConfig()
    img = blank_image(32, 32)
    pm = ProbMap(np.zeros((16, 16), dtype=np.float32))
    pca = pca_fit(np.random.default_rng(0).random((10, cfg.dimension)), 4)
    with pytest.raises(DimensionMismatch):
        build_rgbp_features(img, pm, cfg, pca)


# ---------------------------------------------------------------- aggregation


def test_aggregate_single_entry_pasted_and_normalized():
    rng = np.random.default_rng(4)
    local = ProbMap(rng.random((3, 4)).astype(np.float32))
    rect = RectProposal(2, 1, 4, 3)
    out = aggregate_pmap((10, 8), [(rect, local, 2.5)])
    expect = local.values.astype(np.float64) / local.values.max()
    assert np.allclose(out.values[1:4, 2:6], expect, atol=1e-7)
    outside = out.values.copy()
    outside[1:4, 2:6] = 0
    assert (outside == 0).all()  # out-of-proposal pixels stay zero


def test_aggregate_empty_entries_all_zero():
    out = aggregate_pmap((6, 5), [])
    assert (out.values == 0).all()


def test_aggregate_confidence_scale_invariance():
    rng = np.random.default_rng(8)
    local = ProbMap(rng.random((4, 4)).astype(np.float32))
    rect = RectProposal(0, 0, 4, 4)
    single = aggregate_pmap((8, 8), [(rect, local, 1.0)])
    stacked = aggregate_pmap((8, 8), [(rect, local, 1.0), (rect, local, 3.0)])
    assert np.array_equal(single.values, stacked.values)


def test_aggregate_rejects_bad_entries():
    local = ProbMap(np.zeros((4, 4), dtype=np.float32))
    with pytest.raises(DimensionMismatch):
        aggregate_pmap((8, 8), [(RectProposal(0, 0, 5, 4), local, 1.0)])
    with pytest.raises(ValueOutOfRange):
        aggregate_pmap((8, 8), [(RectProposal(0, 0, 4, 4), local, -1.0)])


def test_nms_keeps_best_overlapping():
    a = (RectProposal(0, 0, 10, 10), 0.9)
    b = (RectProposal(1, 1, 10, 10), 0.8)  # heavy overlap with a
    c = (RectProposal(40, 40, 10, 10), 0.5)
    kept = nms([b, a, c], iou_thresh=0.5)
    assert kept == [a, c]


# ------------------------------------------------------------------ model file


def test_model_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    cfg = HogConfig()
    pca = pca_fit(rng.random((20, cfg.dimension)), 8)
    svm = LinearSvm(rng.normal(size=1820), bias=-0.3)
    model = DetectorModel(cfg=cfg, svm=svm, pca=pca, rgb_only=False)
    path = tmp_path / "det.bin"
    save_model(model, path)
    back = load_model(path)
    assert back.cfg == cfg
    assert back.rgb_only is False
    assert np.array_equal(back.svm.weights, svm.weights) and back.svm.bias == svm.bias
    assert np.array_equal(back.pca.mean, pca.mean)
    assert np.array_equal(back.pca.basis, pca.basis)


def test_detections_json(tmp_path):
    import json

    path = tmp_path / "det.json"
    write_detections(path, [(RectProposal(1, 2, 3, 4), 0.25), (RectProposal(0, 0, 5, 5), 0.75)])
    items = json.loads(path.read_text())
    assert [it["score"] for it in items] == [0.75, 0.25]
    assert items[0]["rect"] == {"x": 0, "y": 0, "w": 5, "h": 5}
