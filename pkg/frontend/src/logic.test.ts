import assert from "node:assert/strict";
import { test } from "node:test";

import {
  DragTracker,
  MIN_RECT_PX,
  buildCutoutRequest,
  bytesToB64,
  b64ToBytes,
  formatNumber,
  isDegenerate,
  maskOverlayRgba,
  parsePgm,
  pmapHeatRgba,
  rectFromDrag,
  traceLabel,
  validateParams,
} from "./logic.js";

const PARAMS = { alpha: 2.3, b: 25, max_iters: 10, gamma: 50, seed: 1 };

// -------------------------------------------------------------- rect drawing

test("drag produces the expected rectangle", () => {
  const rect = rectFromDrag(10, 10, 110, 130, 500, 500);
  assert.deepEqual(rect, { x: 10, y: 10, w: 100, h: 120 });
});

test("drag outside the canvas is clamped to bounds", () => {
  const rect = rectFromDrag(-25, -10, 260, 200, 240, 180);
  assert.deepEqual(rect, { x: 0, y: 0, w: 240, h: 180 });
});

test("reversed drag direction normalizes corners", () => {
  const rect = rectFromDrag(110, 130, 10, 10, 500, 500);
  assert.deepEqual(rect, { x: 10, y: 10, w: 100, h: 120 });
});

test("tiny drags are degenerate", () => {
  const rect = rectFromDrag(10, 10, 12, 12, 100, 100)!;
  assert.ok(isDegenerate(rect));
  assert.ok(!isDegenerate({ x: 0, y: 0, w: MIN_RECT_PX, h: MIN_RECT_PX }));
});

// --------------------------------------------------- one request per drag

test("a full drag issues exactly one request", () => {
  const tracker = new DragTracker(240, 180);
  tracker.down(10, 10);
  for (let i = 0; i < 30; i++) tracker.move(10 + i * 3, 10 + i * 2);
  const action = tracker.up(100, 70);
  assert.equal(action.kind, "request");
  assert.equal(tracker.requestsIssued, 1);
  // pointer noise after release must not issue more requests
  tracker.move(120, 90);
  assert.equal(tracker.up(130, 95).kind, "none");
  assert.equal(tracker.requestsIssued, 1);
});

test("two drags issue two requests, no more", () => {
  const tracker = new DragTracker(240, 180);
  tracker.down(5, 5);
  tracker.up(60, 60);
  tracker.down(20, 20);
  tracker.up(90, 80);
  assert.equal(tracker.requestsIssued, 2);
});

test("a 2-px drag warns instead of requesting", () => {
  const tracker = new DragTracker(240, 180);
  tracker.down(50, 50);
  const action = tracker.up(52, 52);
  assert.equal(action.kind, "warning");
  assert.equal(tracker.requestsIssued, 0);
});

// ----------------------------------------------------------- request bodies

test("request body carries rect, pmap, params", () => {
  const body = buildCutoutRequest({
    imageB64: "aW1n",
    rect: { x: 1, y: 2, w: 30, h: 40 },
    pmapB64: "cG1hcA==",
    gtMaskB64: "Z3Q=",
    params: PARAMS,
    includeTraceMasks: true,
  });
  assert.equal(body.image_b64, "aW1n");
  assert.deepEqual(body.rect, { x: 1, y: 2, w: 30, h: 40 });
  assert.equal(body.pmap_b64, "cG1hcA==");
  assert.equal(body.gt_mask_b64, "Z3Q=");
  assert.equal(body.include_trace_masks, true);
  assert.equal(body.params?.alpha, 2.3);
  assert.equal(body.oracle, undefined);
});

test("exactly one P-map source is enforced client-side", () => {
  assert.throws(() =>
    buildCutoutRequest({
      imageB64: "aW1n",
      rect: { x: 0, y: 0, w: 10, h: 10 },
      params: PARAMS,
    })
  );
  assert.throws(() =>
    buildCutoutRequest({
      imageB64: "aW1n",
      rect: { x: 0, y: 0, w: 10, h: 10 },
      pmapB64: "cA==",
      oracleGtB64: "Zw==",
      params: PARAMS,
    })
  );
  const oracle = buildCutoutRequest({
    imageB64: "aW1n",
    rect: { x: 0, y: 0, w: 10, h: 10 },
    oracleGtB64: "Zw==",
    params: PARAMS,
  });
  assert.deepEqual(oracle.oracle, { gt_mask_b64: "Zw==" });
});

test("invalid parameters are rejected before any request", () => {
  assert.equal(validateParams(PARAMS), null);
  assert.notEqual(validateParams({ ...PARAMS, alpha: 0 }), null);
  assert.notEqual(validateParams({ ...PARAMS, b: -1 }), null);
  assert.notEqual(validateParams({ ...PARAMS, max_iters: 0 }), null);
  assert.throws(() =>
    buildCutoutRequest({
      imageB64: "aW1n",
      rect: { x: 0, y: 0, w: 10, h: 10 },
      pmapB64: "cA==",
      params: { ...PARAMS, gamma: -5 },
    })
  );
});

// ------------------------------------------------------------------ PGM/RGBA

function pgmBytes(header: string, samples: number[]): Uint8Array {
  const head = new TextEncoder().encode(header);
  const out = new Uint8Array(head.length + samples.length);
  out.set(head);
  out.set(samples, head.length);
  return out;
}

test("parses 8-bit mask PGM", () => {
  const pgm = parsePgm(pgmBytes("P5\n3 2\n255\n", [0, 255, 0, 255, 0, 255]));
  assert.equal(pgm.width, 3);
  assert.equal(pgm.height, 2);
  assert.deepEqual(Array.from(pgm.values), [0, 1, 0, 1, 0, 1]);
});

test("parses 16-bit P-map PGM with comments", () => {
  const pgm = parsePgm(pgmBytes("P5\n# oracle\n2 1\n65535\n", [0xff, 0xff, 0x80, 0x00]));
  assert.equal(pgm.maxval, 65535);
  assert.equal(pgm.values[0], 1.0);
  assert.ok(Math.abs(pgm.values[1] - 0x8000 / 65535) < 1e-6);
});

test("rejects non-PGM and truncated data", () => {
  assert.throws(() => parsePgm(new TextEncoder().encode("P6\n1 1\n255\n")));
  assert.throws(() => parsePgm(pgmBytes("P5\n4 4\n255\n", [0, 0])));
});

test("mask overlay tints only foreground", () => {
  const pgm = parsePgm(pgmBytes("P5\n2 1\n255\n", [255, 0]));
  const rgba = maskOverlayRgba(pgm, [10, 20, 30], 200);
  assert.deepEqual(Array.from(rgba.slice(0, 4)), [10, 20, 30, 200]);
  assert.deepEqual(Array.from(rgba.slice(4, 8)), [0, 0, 0, 0]);
});

test("pmap heat ramp is transparent at zero and opaque red at one", () => {
  const pgm = parsePgm(pgmBytes("P5\n2 1\n255\n", [0, 255]));
  const rgba = pmapHeatRgba(pgm, 170);
  assert.equal(rgba[3], 0); // p = 0 -> invisible
  assert.equal(rgba[4], 255); // p = 1 -> full red
  assert.equal(rgba[7], 170);
});

// ------------------------------------------------------------------- trace

test("trace label shows the server's w verbatim and w equals b/k", () => {
  const b = 25;
  const serverTrace = [1, 2, 3, 4, 5].map((k) => ({
    k,
    w: b / k,
    energy: 1000.5 - k,
    changed_pixels: 100 - k * 10,
  }));
  for (const rec of serverTrace) {
    const label = traceLabel(rec);
    assert.ok(label.includes(`k=${rec.k}`));
    assert.ok(label.includes(`w=${formatNumber(rec.w)}`));
    assert.equal(rec.w, b / rec.k);
  }
  assert.ok(traceLabel(serverTrace[0]).includes("w=25"));
  assert.ok(traceLabel(serverTrace[1]).includes("w=12.5"));
});

// ------------------------------------------------------------------ base64

test("base64 round trip", () => {
  const bytes = new Uint8Array([0, 1, 2, 250, 255, 128]);
  assert.deepEqual(Array.from(b64ToBytes(bytesToB64(bytes))), Array.from(bytes));
});

// ------------------------------------------------- UI-loop acceptance check

test("UI loop: demo rect drag -> one request; scrubbing shows w = b/k from the trace", () => {
  // demo scene bundle as the server sends it
  const demo = {
    width: 240,
    height: 180,
    imageB64: "aW1hZ2U=",
    target: { rect: { x: 52, y: 31, w: 54, h: 47 }, pmapB64: "cG1hcA==", gtB64: "Z3Q=" },
  };
  const tracker = new DragTracker(demo.width, demo.height);

  // draw a rectangle around the suggested target
  tracker.down(demo.target.rect.x - 4, demo.target.rect.y - 4);
  tracker.move(100, 60);
  const action = tracker.up(
    demo.target.rect.x + demo.target.rect.w + 4,
    demo.target.rect.y + demo.target.rect.h + 4
  );
  assert.equal(action.kind, "request");
  assert.equal(tracker.requestsIssued, 1);
  const rect = (action as { kind: "request"; rect: { x: number; y: number; w: number; h: number } }).rect;

  const body = buildCutoutRequest({
    imageB64: demo.imageB64,
    rect,
    pmapB64: demo.target.pmapB64,
    gtMaskB64: demo.target.gtB64,
    params: PARAMS,
    includeTraceMasks: true,
  });
  assert.equal(body.include_trace_masks, true);

  // server response trace (as produced by the service): masks render through
  // maskOverlayRgba, and the slider label shows the server's w verbatim
  const maskPgm = pgmBytes("P5\n2 2\n255\n", [255, 0, 0, 255]);
  const serverResponse = {
    mask_pgm_b64: bytesToB64(maskPgm),
    iou: 0.97,
    trace: [1, 2, 3].map((k) => ({
      k,
      w: PARAMS.b / k,
      energy: 500 - k,
      changed_pixels: 60 - k,
      mask_pgm_b64: bytesToB64(maskPgm),
    })),
    timing_ms: 120.0,
    method: "pmap",
  };
  const overlay = maskOverlayRgba(parsePgm(b64ToBytes(serverResponse.mask_pgm_b64)));
  assert.ok(overlay[3] > 0 && overlay[7] === 0); // FG tinted, BG clear
  for (const rec of serverResponse.trace) {
    assert.equal(rec.w, PARAMS.b / rec.k);
    assert.ok(traceLabel(rec).includes(`w=${formatNumber(rec.w)}`));
  }
  // scrubbing the slider is display-only: no further requests were issued
  assert.equal(tracker.requestsIssued, 1);
});
