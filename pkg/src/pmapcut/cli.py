"""Command-line entry points for every pipeline stage.

Exit codes: 0 success, 1 usage error, 2 runtime error. Runtime errors print
one line to stderr: "error: <Code>: <detail>". Log level comes from the
PMAP_CUTOUT_LOG environment variable (DEBUG/INFO/WARNING/ERROR).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import bench as benchmod
from .cutout import CutoutParams, plain_grabcut_with_iterations, pmap_grabcut
from .detect import (
    DetectorModel,
    HogConfig,
    aggregate_pmap,
    gen_proposals,
    load_model,
    load_proposals,
    nms,
    pca_fit,
    save_model,
    score_proposals,
    svm_train,
    write_detections,
)
from .errors import CutoutError, DimensionMismatch, OutOfBounds
from .imagecore import (
    CutoutMask,
    RectProposal,
    crop,
    load_image,
    load_mask,
    load_pmap,
    save_image,
    save_mask,
    save_pmap,
)
from .metrics import mask_iou
from .synth import OracleNoise, SceneSpec, gen_scene, oracle_pmap


class CliParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _rect_type(text: str) -> RectProposal:
    try:
        x, y, w, h = (int(v) for v in text.split(","))
        return RectProposal(x, y, w, h)
    except (ValueError, CutoutError) as exc:
        raise argparse.ArgumentTypeError(f"rect must be x,y,w,h integers: {exc}") from exc


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",")]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",")]


def _add_param_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("cutout parameters")
    g.add_argument("--alpha", type=float, default=2.3, help="P-map likelihood exponent")
    g.add_argument("--b", type=float, default=25.0, help="prior weight numerator (w = b/k)")
    g.add_argument("--max-iters", type=int, default=10)
    g.add_argument("--gamma", type=float, default=50.0, help="smoothness strength")
    g.add_argument("--mixture-k", type=int, default=5, help="GMM components per color model")
    g.add_argument("--eps-prob", type=float, default=1e-6)
    g.add_argument("--converge-frac", type=float, default=0.001)
    g.add_argument("--seed", type=int, default=1)


def _params_from(args) -> CutoutParams:
    return CutoutParams(
        alpha=args.alpha,
        b=args.b,
        max_iters=args.max_iters,
        gamma=args.gamma,
        K=args.mixture_k,
        eps_prob=args.eps_prob,
        converge_frac=args.converge_frac,
        seed=args.seed,
    )


def _add_noise_flags(p: argparse.ArgumentParser, blur=2, flip=0.05, leak=0.15):
    g = p.add_argument_group("oracle noise")
    g.add_argument("--blur", type=int, default=blur)
    g.add_argument("--flip-noise", type=float, default=flip)
    g.add_argument("--leak", type=float, default=leak)
    g.add_argument("--noise-seed", type=int, default=None, help="defaults to scene seed + 1000")


def _noise_from(args, fallback_seed: int) -> OracleNoise:
    seed = args.noise_seed if args.noise_seed is not None else fallback_seed + 1000
    return OracleNoise(args.blur, args.flip_noise, args.leak, seed)


def _add_scene_flags(p: argparse.ArgumentParser, width=200, height=150, distractors=3):
    g = p.add_argument_group("scene")
    g.add_argument("--width", type=int, default=width)
    g.add_argument("--height", type=int, default=height)
    g.add_argument("--targets", type=int, default=1)
    g.add_argument("--distractors", type=int, default=distractors)
    g.add_argument("--palette-overlap", type=float, default=1.0)
    g.add_argument(
        "--background", choices=("flat", "gradient", "texture"), default="texture"
    )


def build_parser() -> CliParser:
    parser = CliParser(prog="pmapcut", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic scene bundle")
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.add_argument("--scene-seed", type=int, default=7)
    _add_scene_flags(p_synth)
    _add_noise_flags(p_synth)

    p_cut = sub.add_parser("cutout", help="P-map guided cutout inside a rectangle")
    p_cut.add_argument("--image", required=True)
    p_cut.add_argument("--pmap", required=True, help="P-map sized to the image or to the rect")
    p_cut.add_argument("--rect", required=True, type=_rect_type, help="x,y,w,h")
    p_cut.add_argument("--out", required=True, help="output mask PGM (full image size)")
    p_cut.add_argument("--gt", help="ground-truth mask PGM; prints IoU when given")
    p_cut.add_argument("--trace-out", help="write per-iteration trace JSON here")
    _add_param_flags(p_cut)

    p_grab = sub.add_parser("grabcut", help="plain rectangle-initialized GrabCut baseline")
    p_grab.add_argument("--image", required=True)
    p_grab.add_argument("--rect", required=True, type=_rect_type, help="x,y,w,h")
    p_grab.add_argument("--out", required=True)
    p_grab.add_argument("--gt")
    _add_param_flags(p_grab)

    p_detect = sub.add_parser("detect", help="proposal scoring: train or score")
    dsub = p_detect.add_subparsers(dest="detect_command", required=True)

    p_train = dsub.add_parser("train", help="train a proposal classifier on synthetic scenes")
    p_train.add_argument("--out", required=True, help="model file")
    p_train.add_argument("--scenes", type=int, default=20)
    p_train.add_argument("--scene-seed", type=int, default=9000)
    p_train.add_argument("--rgb-only", action="store_true", help="ablation: drop the P channel")
    p_train.add_argument("--pca-dim", type=int, default=128)
    p_train.add_argument("--epochs", type=int, default=20)
    p_train.add_argument("--svm-lambda", type=float, default=1e-4)
    p_train.add_argument("--train-seed", type=int, default=5)
    _add_scene_flags(p_train)
    _add_noise_flags(p_train)

    p_score = dsub.add_parser("score", help="score proposals on an image")
    p_score.add_argument("--model", required=True)
    p_score.add_argument("--image", required=True)
    p_score.add_argument("--pmap", help="needed unless the model is RGB-only")
    p_score.add_argument("--proposals", help="JSON-lines file; otherwise a sliding grid is used")
    p_score.add_argument("--scales", type=_int_list, default=[48, 64])
    p_score.add_argument("--stride-frac", type=float, default=0.5)
    p_score.add_argument("--ratios", type=_float_list, default=[0.8, 1.0, 1.25])
    p_score.add_argument("--out", required=True, help="detections JSON")
    p_score.add_argument("--nms", action="store_true", help="suppress overlaps (IoU 0.5)")
    p_score.add_argument("--aggregate", help="also write an aggregated P-map PGM here")

    p_bench = sub.add_parser("bench", help="run the cutout benchmark and write reports")
    p_bench.add_argument("--out", required=True, help="output directory")
    p_bench.add_argument("--scenes", type=int, default=50)
    p_bench.add_argument("--scene-seed", type=int, default=1000)
    p_bench.add_argument(
        "--methods", default="pmap_grabcut,plain_grabcut", help="comma-separated subset"
    )
    p_bench.add_argument("--margin", type=float, default=0.6, help="context margin per side")
    p_bench.add_argument("--no-figures", action="store_true")
    _add_scene_flags(p_bench)
    _add_noise_flags(p_bench)
    _add_param_flags(p_bench)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--port", type=int, default=8765)
    p_serve.add_argument("--bind", default="127.0.0.1")
    p_serve.add_argument("--static", help="serve this directory at / (the browser UI build)")

    return parser


def _cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = SceneSpec(
        width=args.width,
        height=args.height,
        n_targets=args.targets,
        n_distractors=args.distractors,
        palette_overlap=args.palette_overlap,
        background_kind=args.background,
        seed=args.scene_seed,
    )
    noise = _noise_from(args, spec.seed)
    scene = gen_scene(spec)
    save_image(scene.image, out / "scene.png")

    manifest = {
        "spec": asdict(spec),
        "noise": asdict(noise),
        "image": "scene.png",
        "targets": [],
        "n_distractors": len(scene.distractor_masks),
    }
    for i, (mask, rect) in enumerate(zip(scene.gt_masks, scene.gt_rects)):
        others = [m for j, m in enumerate(scene.gt_masks) if j != i]
        pmap = oracle_pmap(mask, list(scene.distractor_masks) + others, noise)
        mask_name, pmap_name = f"target_{i:02d}.mask.pgm", f"target_{i:02d}.pmap.pgm"
        save_mask(mask, out / mask_name)
        save_pmap(pmap, out / pmap_name)
        manifest["targets"].append(
            {
                "index": i,
                "rect": {"x": rect.x, "y": rect.y, "w": rect.w, "h": rect.h},
                "mask": mask_name,
                "pmap": pmap_name,
            }
        )
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"scene bundle written to {out} ({len(manifest['targets'])} target(s))")
    return 0


def _paste_mask(mask_c: CutoutMask, rect: RectProposal, width: int, height: int) -> CutoutMask:
    labels = np.zeros((height, width), dtype=bool)
    labels[rect.y : rect.y + rect.h, rect.x : rect.x + rect.w] = mask_c.labels
    return CutoutMask(labels)


def _cmd_cutout(args) -> int:
    image = load_image(args.image)
    pmap = load_pmap(args.pmap)
    rect = args.rect
    params = _params_from(args)
    if not rect.inside(image.width, image.height):
        raise OutOfBounds(
            f"rect {rect.x},{rect.y},{rect.w},{rect.h} exceeds {image.width}x{image.height} image"
        )
    if (pmap.width, pmap.height) == (image.width, image.height):
        pmap_c = crop(pmap, rect)
    elif (pmap.width, pmap.height) == (rect.w, rect.h):
        pmap_c = pmap
    else:
        raise DimensionMismatch(
            f"P-map {pmap.width}x{pmap.height} matches neither the image nor the rect"
        )
    mask_c, trace = pmap_grabcut(crop(image, rect), pmap_c, params)
    full = _paste_mask(mask_c, rect, image.width, image.height)
    save_mask(full, args.out)
    line = f"mask written to {args.out} ({trace.iterations} iteration(s), {full.fg_count} fg px)"
    if args.gt:
        line += f", IoU {mask_iou(full, load_mask(args.gt)):.4f}"
    print(line)
    if args.trace_out:
        payload = [
            {"k": r.k, "w": r.w, "energy": r.energy, "changed_pixels": r.changed_pixels}
            for r in trace.records
        ]
        Path(args.trace_out).write_text(json.dumps(payload, indent=2) + "\n")
    return 0


def _cmd_grabcut(args) -> int:
    image = load_image(args.image)
    params = _params_from(args)
    mask, iterations = plain_grabcut_with_iterations(image, args.rect, params)
    save_mask(mask, args.out)
    line = f"mask written to {args.out} ({iterations} iteration(s), {mask.fg_count} fg px)"
    if args.gt:
        line += f", IoU {mask_iou(mask, load_mask(args.gt)):.4f}"
    print(line)
    return 0


def _cmd_detect_train(args) -> int:
    grid = benchmod.make_scene_grid(
        args.scenes,
        base_seed=args.scene_seed,
        width=args.width,
        height=args.height,
        n_targets=args.targets,
        n_distractors=args.distractors,
        palette_overlap=args.palette_overlap,
        background_kind=args.background,
    )
    noise = _noise_from(args, args.scene_seed)
    cfg = HogConfig()
    corpus = benchmod.build_proposal_corpus(grid, noise, cfg)
    y = np.where(corpus.labels, 1.0, -1.0)

    pca = None
    feats = corpus.rgb_features
    if not args.rgb_only:
        pca = pca_fit(corpus.phog_features, args.pca_dim)
        projected = (corpus.phog_features - pca.mean) @ pca.basis.T
        feats = np.hstack([corpus.rgb_features, projected])

    from .bench import _rebalanced

    xtr, ytr = _rebalanced(feats, y)
    svm = svm_train(xtr, ytr, lam=args.svm_lambda, epochs=args.epochs, seed=args.train_seed)
    model = DetectorModel(cfg=cfg, svm=svm, pca=pca, rgb_only=args.rgb_only)
    save_model(model, args.out)

    from .detect import svm_score
    from .metrics import balanced_recall

    recall = balanced_recall(list(zip(svm_score(svm, feats) > 0, corpus.labels)))
    mode = "RGB-only" if args.rgb_only else "RGB-P"
    print(
        f"{mode} model written to {args.out} "
        f"({len(corpus.labels)} proposals, {int(corpus.labels.sum())} positives, "
        f"train balanced recall {recall:.3f})"
    )
    return 0


def _cmd_detect_score(args) -> int:
    model = load_model(args.model)
    image = load_image(args.image)
    pmap = None
    if not model.rgb_only:
        if not args.pmap:
            raise DimensionMismatch("this model needs --pmap (it was trained with the P channel)")
        pmap = load_pmap(args.pmap)
        if (pmap.width, pmap.height) != (image.width, image.height):
            raise DimensionMismatch(
                f"P-map {pmap.width}x{pmap.height} does not match image {image.width}x{image.height}"
            )
    if args.proposals:
        proposals = load_proposals(args.proposals)
    else:
        proposals = gen_proposals(image, args.scales, args.stride_frac, args.ratios)
    scored = score_proposals(model, image, pmap, proposals)
    if args.nms:
        scored = nms(scored, iou_thresh=0.5)
    write_detections(args.out, scored)
    print(f"{len(scored)} detections written to {args.out}")
    if args.aggregate:
        if pmap is None:
            raise DimensionMismatch("aggregation needs a P-map; RGB-only models cannot provide one")
        # SVM margins can sit below zero across the board; shift them so the
        # worst proposal weighs 0 and ranking is preserved
        floor = min((s for _, s in scored), default=0.0)
        entries = [(r, crop(pmap, r), s - floor) for r, s in scored]
        agg = aggregate_pmap((image.width, image.height), entries)
        save_pmap(agg, args.aggregate)
        print(f"aggregated P-map written to {args.aggregate}")
    return 0


def _cmd_bench(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    grid = benchmod.make_scene_grid(
        args.scenes,
        base_seed=args.scene_seed,
        width=args.width,
        height=args.height,
        n_targets=args.targets,
        n_distractors=args.distractors,
        palette_overlap=args.palette_overlap,
        background_kind=args.background,
    )
    noise = _noise_from(args, args.scene_seed)
    report = benchmod.run_benchmark(
        grid, noise, _params_from(args), methods=methods, context_margin=args.margin
    )
    benchmod.write_report_json(report, out / "report.json")
    benchmod.write_report_csv(report, out / "report.csv")
    figures = [] if args.no_figures else benchmod.render_report_figures(report, out)
    summary = report.summary()
    for method in report.methods():
        print(
            f"{method}: mean IoU {summary['mean_iou'][method]:.4f}, "
            f"wins {summary['win_counts'][method]}, "
            f"degenerate {summary['degenerate_runs'][method]}"
        )
    print(f"report written to {out / 'report.json'} and {out / 'report.csv'}")
    for f in figures:
        print(f"figure written to {f}")
    return 0


def _cmd_serve(args) -> int:
    from .service import serve

    server = serve(args.port, args.bind, args.static)
    host, port = server.server_address[:2]
    print(f"serving on http://{host}:{port} (Ctrl-C to stop)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "cutout": _cmd_cutout,
    "grabcut": _cmd_grabcut,
    "bench": _cmd_bench,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("PMAP_CUTOUT_LOG", "WARNING").upper())
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "detect":
            handler = _cmd_detect_train if args.detect_command == "train" else _cmd_detect_score
            return handler(args)
        return _COMMANDS[args.command](args)
    except CutoutError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: IoFailure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
