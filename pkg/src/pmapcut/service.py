"""Small JSON/base64 HTTP service exposing the cutout pipeline.

Endpoints:
  GET  /health        -> {"status": "ok"}
  GET  /synth?seed=N  -> demo scene bundle (PNG image, per-target masks and
                         oracle P-maps, rects) for zero-asset clients
  POST /pmap/oracle   -> synthesize a P-map from a ground-truth mask
  POST /cutout        -> run the P-map guided cutout (or the plain baseline)
                         inside a rectangle; returns mask, trace, timing

Bodies are JSON with binary fields base64-encoded; requests over 32 MiB are
refused. Errors carry {"error": <code>, "detail": <text>} with codes from
the package's closed error enumeration.
"""

from __future__ import annotations

import base64
import binascii
import json
import logging
import time
from dataclasses import asdict
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

import numpy as np

from .cutout import CutoutParams, plain_grabcut, pmap_grabcut
from .errors import (
    CorruptData,
    CutoutError,
    DimensionMismatch,
    EmptyBackground,
    EmptyForeground,
    NegativeUnary,
    OutOfBounds,
    UnsupportedFormat,
    ValueOutOfRange,
)
from .imagecore import (
    CutoutMask,
    RectProposal,
    crop,
    decode_image,
    decode_mask,
    decode_pmap,
    mask_bytes,
    pmap_bytes,
)
from .metrics import mask_iou
from .pngio import encode as encode_png
from .synth import OracleNoise, SceneSpec, gen_scene, oracle_pmap

log = logging.getLogger("pmapcut.service")

MAX_BODY_BYTES = 32 * 1024 * 1024
SEMANTIC_ERRORS = (
    OutOfBounds,
    EmptyForeground,
    EmptyBackground,
    DimensionMismatch,
    ValueOutOfRange,
    UnsupportedFormat,
    CorruptData,
    NegativeUnary,
)

DEMO_NOISE = OracleNoise(blur_radius=2, flip_noise=0.05, leak=0.15, seed=0)


class BadRequest(Exception):
    """400-level request shape problem."""


class PayloadTooLarge(Exception):
    pass


def _b64_field(obj, key, required=False) -> bytes | None:
    val = obj.get(key)
    if val is None:
        if required:
            raise BadRequest(f"missing required field {key!r}")
        return None
    if not isinstance(val, str):
        raise BadRequest(f"field {key!r} must be a base64 string")
    try:
        return base64.b64decode(val, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise BadRequest(f"field {key!r} is not valid base64: {exc}") from exc


def _rect_field(obj) -> RectProposal:
    rect = obj.get("rect")
    if not isinstance(rect, dict):
        raise BadRequest("missing required object field 'rect'")
    try:
        return RectProposal(int(rect["x"]), int(rect["y"]), int(rect["w"]), int(rect["h"]))
    except (KeyError, TypeError) as exc:
        raise BadRequest(f"rect needs integer fields x, y, w, h: {exc}") from exc


def _params_field(obj) -> CutoutParams:
    raw = obj.get("params") or {}
    if not isinstance(raw, dict):
        raise BadRequest("'params' must be an object")
    allowed = {"alpha", "b", "max_iters", "gamma", "K", "eps_prob", "converge_frac", "seed"}
    unknown = set(raw) - allowed
    if unknown:
        raise BadRequest(f"unknown params: {sorted(unknown)}")
    return CutoutParams(**raw)


def _noise_field(raw) -> OracleNoise:
    if raw is None:
        return DEMO_NOISE
    if not isinstance(raw, dict):
        raise BadRequest("'noise' must be an object")
    allowed = {"blur_radius", "flip_noise", "leak", "seed"}
    unknown = set(raw) - allowed
    if unknown:
        raise BadRequest(f"unknown noise fields: {sorted(unknown)}")
    return OracleNoise(**raw)


def handle_cutout(body: dict) -> dict:
    image = decode_image(_b64_field(body, "image_b64", required=True))
    rect = _rect_field(body)
    params = _params_field(body)
    method = body.get("method", "pmap")
    if method not in ("pmap", "plain"):
        raise BadRequest("method must be 'pmap' or 'plain'")
    if not rect.inside(image.width, image.height):
        raise OutOfBounds(
            f"rect {rect.x},{rect.y},{rect.w},{rect.h} exceeds {image.width}x{image.height} image"
        )

    gt_data = _b64_field(body, "gt_mask_b64")
    gt = decode_mask(gt_data) if gt_data else None

    t0 = time.perf_counter()
    trace_summary = []
    if method == "plain":
        if rect.w < 2 and rect.h < 2:
            raise OutOfBounds("rect too small")
        full_mask = plain_grabcut(image, rect, params)
    else:
        pmap_data = _b64_field(body, "pmap_b64")
        oracle_spec = body.get("oracle")
        if (pmap_data is None) == (oracle_spec is None):
            raise BadRequest("provide exactly one of 'pmap_b64' or 'oracle' for the pmap method")
        if pmap_data is not None:
            pmap = decode_pmap(pmap_data)
        else:
            if not isinstance(oracle_spec, dict):
                raise BadRequest("'oracle' must be an object")
            gt_oracle = decode_mask(_b64_field(oracle_spec, "gt_mask_b64", required=True))
            distractors = [
                decode_mask(base64.b64decode(d))
                for d in oracle_spec.get("distractor_masks_b64", [])
            ]
            noise = _noise_field(oracle_spec.get("noise"))
            pmap = oracle_pmap(gt_oracle, distractors, noise)
        if (pmap.width, pmap.height) == (image.width, image.height):
            pmap_c = crop(pmap, rect)
        elif (pmap.width, pmap.height) == (rect.w, rect.h):
            pmap_c = pmap
        else:
            raise DimensionMismatch(
                f"P-map {pmap.width}x{pmap.height} matches neither the image nor the rect"
            )
        mask_c, trace = pmap_grabcut(crop(image, rect), pmap_c, params)

        def paste(mask):
            labels = np.zeros((image.height, image.width), dtype=bool)
            labels[rect.y : rect.y + rect.h, rect.x : rect.x + rect.w] = mask.labels
            return CutoutMask(labels)

        full_mask = paste(mask_c)
        include_masks = bool(body.get("include_trace_masks", False))
        trace_summary = []
        for r in trace.records:
            rec = {"k": r.k, "w": r.w, "energy": r.energy, "changed_pixels": r.changed_pixels}
            if include_masks:
                rec["mask_pgm_b64"] = base64.b64encode(mask_bytes(paste(r.mask))).decode()
            trace_summary.append(rec)
    timing_ms = (time.perf_counter() - t0) * 1000.0

    response = {
        "mask_pgm_b64": base64.b64encode(mask_bytes(full_mask)).decode(),
        "trace": trace_summary,
        "timing_ms": timing_ms,
        "method": method,
    }
    if gt is not None:
        response["iou"] = mask_iou(full_mask, gt)
    return response


def handle_oracle(body: dict) -> dict:
    gt = decode_mask(_b64_field(body, "gt_mask_b64", required=True))
    distractors = [decode_mask(base64.b64decode(d)) for d in body.get("distractor_masks_b64", [])]
    noise = _noise_field(body.get("noise"))
    pmap = oracle_pmap(gt, distractors, noise)
    return {"pmap_pgm_b64": base64.b64encode(pmap_bytes(pmap)).decode()}


def handle_synth(query: dict) -> dict:
    def qint(name, default):
        try:
            return int(query.get(name, [default])[0])
        except ValueError as exc:
            raise BadRequest(f"query parameter {name} must be an integer") from exc

    seed = qint("seed", 7)
    width = qint("width", 240)
    height = qint("height", 180)
    distractors = qint("distractors", 3)
    spec = SceneSpec(
        width=width,
        height=height,
        n_targets=1,
        n_distractors=distractors,
        palette_overlap=1.0,
        background_kind="texture",
        seed=seed,
    )
    scene = gen_scene(spec)
    noise = OracleNoise(
        DEMO_NOISE.blur_radius, DEMO_NOISE.flip_noise, DEMO_NOISE.leak, seed=seed + 1
    )
    targets = []
    for i, (mask, rect) in enumerate(zip(scene.gt_masks, scene.gt_rects)):
        others = [m for j, m in enumerate(scene.gt_masks) if j != i]
        pmap = oracle_pmap(mask, list(scene.distractor_masks) + others, noise)
        targets.append(
            {
                "index": i,
                "rect": {"x": rect.x, "y": rect.y, "w": rect.w, "h": rect.h},
                "gt_mask_pgm_b64": base64.b64encode(mask_bytes(mask)).decode(),
                "oracle_pmap_pgm_b64": base64.b64encode(pmap_bytes(pmap)).decode(),
            }
        )
    return {
        "seed": seed,
        "width": spec.width,
        "height": spec.height,
        "image_png_b64": base64.b64encode(encode_png(scene.image.pixels)).decode(),
        "noise": asdict(noise),
        "targets": targets,
    }


def make_handler(static_dir=None):
    static_root = Path(static_dir).resolve() if static_dir else None

    class Handler(BaseHTTPRequestHandler):
        server_version = "pmapcut/0.1"

        def log_message(self, fmt, *args):
            log.debug("%s %s", self.address_string(), fmt % args)

        def _send_json(self, status: int, payload: dict):
            data = json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(data)

        def _send_error(self, status: int, code: str, detail: str):
            self._send_json(status, {"error": code, "detail": detail})

        def _read_body(self) -> dict:
            length = int(self.headers.get("Content-Length", 0))
            if length > MAX_BODY_BYTES:
                raise PayloadTooLarge(f"body of {length} bytes exceeds {MAX_BODY_BYTES}")
            raw = self.rfile.read(length)
            try:
                body = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise BadRequest(f"body is not valid JSON: {exc}") from exc
            if not isinstance(body, dict):
                raise BadRequest("body must be a JSON object")
            return body

        def _dispatch(self, method: str):
            url = urlparse(self.path)
            try:
                if method == "GET" and url.path == "/health":
                    self._send_json(200, {"status": "ok"})
                elif method == "GET" and url.path == "/synth":
                    self._send_json(200, handle_synth(parse_qs(url.query)))
                elif method == "POST" and url.path == "/cutout":
                    self._send_json(200, handle_cutout(self._read_body()))
                elif method == "POST" and url.path == "/pmap/oracle":
                    self._send_json(200, handle_oracle(self._read_body()))
                elif method == "GET" and static_root is not None:
                    self._serve_static(url.path)
                else:
                    self._send_error(404, "NotFound", f"no route {method} {url.path}")
            except PayloadTooLarge as exc:
                self._send_error(413, "PayloadTooLarge", str(exc))
            except BadRequest as exc:
                self._send_error(400, "BadRequest", str(exc))
            except SEMANTIC_ERRORS as exc:
                self._send_error(422, exc.code, str(exc))
            except CutoutError as exc:
                self._send_error(422, exc.code, str(exc))
            except Exception as exc:  # noqa: BLE001 - boundary of the service
                log.exception("internal error handling %s %s", method, url.path)
                self._send_error(500, "Internal", f"{type(exc).__name__}: {exc}")

        def _serve_static(self, path: str):
            rel = path.lstrip("/") or "index.html"
            target = (static_root / rel).resolve()
            if not str(target).startswith(str(static_root)) or not target.is_file():
                self._send_error(404, "NotFound", f"no route GET {path}")
                return
            ctype = {
                ".html": "text/html",
                ".js": "text/javascript",
                ".css": "text/css",
                ".png": "image/png",
                ".svg": "image/svg+xml",
            }.get(target.suffix, "application/octet-stream")
            data = target.read_bytes()
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            self._dispatch("GET")

        def do_POST(self):
            self._dispatch("POST")

    return Handler


def serve(port: int, bind: str = "127.0.0.1", static_dir=None) -> ThreadingHTTPServer:
    """Create the HTTP server; caller runs serve_forever()."""
    return ThreadingHTTPServer((bind, port), make_handler(static_dir))
