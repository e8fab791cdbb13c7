// Pure logic for the cutout UI: rectangle math, PGM decoding, overlay pixel
// buffers, request construction, and the one-request-per-drag state machine.
// Everything here is DOM-free so it runs under node's test runner.

export interface Rect {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface CutoutParamsUI {
  alpha: number;
  b: number;
  max_iters: number;
  gamma: number;
  seed: number;
}

export interface TraceRecord {
  k: number;
  w: number;
  energy: number;
  changed_pixels: number;
  mask_pgm_b64?: string;
}

export interface CutoutResponse {
  mask_pgm_b64: string;
  iou?: number;
  trace: TraceRecord[];
  timing_ms: number;
  method: string;
}

export interface CutoutRequestBody {
  image_b64: string;
  rect: Rect;
  pmap_b64?: string;
  oracle?: { gt_mask_b64: string };
  gt_mask_b64?: string;
  params?: Partial<CutoutParamsUI>;
  method?: string;
  include_trace_masks?: boolean;
}

export const MIN_RECT_PX = 4;

export function clamp(v: number, lo: number, hi: number): number {
  return Math.min(Math.max(v, lo), hi);
}

/** Rubber-band drag to an integer rect clamped inside a width x height image. */
export function rectFromDrag(
  x0: number,
  y0: number,
  x1: number,
  y1: number,
  width: number,
  height: number
): Rect | null {
  const ax = clamp(Math.round(Math.min(x0, x1)), 0, width - 1);
  const ay = clamp(Math.round(Math.min(y0, y1)), 0, height - 1);
  const bx = clamp(Math.round(Math.max(x0, x1)), 0, width);
  const by = clamp(Math.round(Math.max(y0, y1)), 0, height);
  const w = bx - ax;
  const h = by - ay;
  if (w < 1 || h < 1) return null;
  return { x: ax, y: ay, w, h };
}

export function isDegenerate(rect: Rect, minSide: number = MIN_RECT_PX): boolean {
  return rect.w < minSide || rect.h < minSide;
}

/** Mirror of the server-side parameter invariants; returns a problem or null. */
export function validateParams(p: CutoutParamsUI): string | null {
  if (!(p.alpha > 0)) return "alpha must be > 0";
  if (!(p.b > 0)) return "b must be > 0";
  if (!(Number.isInteger(p.max_iters) && p.max_iters >= 1)) return "max_iters must be an integer >= 1";
  if (!(p.gamma >= 0)) return "gamma must be >= 0";
  if (!(Number.isInteger(p.seed) && p.seed >= 0)) return "seed must be a nonnegative integer";
  return null;
}

/** Assemble a /cutout body; enforces "exactly one P-map source" client-side. */
export function buildCutoutRequest(args: {
  imageB64: string;
  rect: Rect;
  pmapB64?: string;
  oracleGtB64?: string;
  gtMaskB64?: string;
  params: CutoutParamsUI;
  includeTraceMasks?: boolean;
}): CutoutRequestBody {
  const problem = validateParams(args.params);
  if (problem) throw new Error(problem);
  const sources = [args.pmapB64, args.oracleGtB64].filter((s) => s !== undefined).length;
  if (sources !== 1) {
    throw new Error("exactly one of pmapB64 / oracleGtB64 must be provided");
  }
  const body: CutoutRequestBody = {
    image_b64: args.imageB64,
    rect: args.rect,
    params: {
      alpha: args.params.alpha,
      b: args.params.b,
      max_iters: args.params.max_iters,
      gamma: args.params.gamma,
      seed: args.params.seed,
    },
  };
  if (args.pmapB64 !== undefined) body.pmap_b64 = args.pmapB64;
  else body.oracle = { gt_mask_b64: args.oracleGtB64! };
  if (args.gtMaskB64 !== undefined) body.gt_mask_b64 = args.gtMaskB64;
  if (args.includeTraceMasks) body.include_trace_masks = true;
  return body;
}

// ---------------------------------------------------------------- PGM codec

export interface Pgm {
  width: number;
  height: number;
  maxval: number;
  /** normalized [0, 1], row-major */
  values: Float32Array;
}

export function parsePgm(bytes: Uint8Array): Pgm {
  if (bytes.length < 2 || bytes[0] !== 0x50 || bytes[1] !== 0x35) {
    throw new Error("not a binary PGM (P5)");
  }
  let pos = 2;
  const fields: number[] = [];
  while (fields.length < 3) {
    while (pos < bytes.length && isSpace(bytes[pos])) pos++;
    if (bytes[pos] === 0x23) {
      while (pos < bytes.length && bytes[pos] !== 0x0a) pos++;
      continue;
    }
    let start = pos;
    while (pos < bytes.length && !isSpace(bytes[pos])) pos++;
    if (start === pos) throw new Error("truncated PGM header");
    fields.push(parseInt(textOf(bytes, start, pos), 10));
  }
  pos++; // single whitespace after maxval
  const [width, height, maxval] = fields;
  if (!(width >= 1 && height >= 1 && maxval >= 1 && maxval <= 65535)) {
    throw new Error(`bad PGM header ${width}x${height} maxval ${maxval}`);
  }
  const n = width * height;
  const values = new Float32Array(n);
  if (maxval > 255) {
    if (bytes.length - pos < 2 * n) throw new Error("truncated PGM samples");
    for (let i = 0; i < n; i++) {
      values[i] = ((bytes[pos + 2 * i] << 8) | bytes[pos + 2 * i + 1]) / maxval;
    }
  } else {
    if (bytes.length - pos < n) throw new Error("truncated PGM samples");
    for (let i = 0; i < n; i++) values[i] = bytes[pos + i] / maxval;
  }
  return { width, height, maxval, values };
}

function isSpace(b: number): boolean {
  return b === 0x20 || b === 0x09 || b === 0x0a || b === 0x0d || b === 0x0b || b === 0x0c;
}

function textOf(bytes: Uint8Array, start: number, end: number): string {
  let s = "";
  for (let i = start; i < end; i++) s += String.fromCharCode(bytes[i]);
  return s;
}

// ------------------------------------------------------------- overlay RGBA

/** Foreground tint for a mask PGM: colored where value > 0.5, clear elsewhere. */
export function maskOverlayRgba(
  pgm: Pgm,
  color: [number, number, number] = [64, 220, 96],
  alpha: number = 140
): Uint8ClampedArray<ArrayBuffer> {
  const out = new Uint8ClampedArray(pgm.width * pgm.height * 4);
  for (let i = 0; i < pgm.values.length; i++) {
    if (pgm.values[i] > 0.5) {
      out[4 * i] = color[0];
      out[4 * i + 1] = color[1];
      out[4 * i + 2] = color[2];
      out[4 * i + 3] = alpha;
    }
  }
  return out;
}

/** Blue-to-red heat ramp for a P-map, transparent at p = 0. */
export function pmapHeatRgba(pgm: Pgm, maxAlpha: number = 170): Uint8ClampedArray<ArrayBuffer> {
  const out = new Uint8ClampedArray(pgm.width * pgm.height * 4);
  for (let i = 0; i < pgm.values.length; i++) {
    const p = pgm.values[i];
    out[4 * i] = Math.round(255 * p);
    out[4 * i + 1] = 40;
    out[4 * i + 2] = Math.round(255 * (1 - p));
    out[4 * i + 3] = Math.round(maxAlpha * p);
  }
  return out;
}

// -------------------------------------------------------------- trace panel

/** Slider position i (0-based) over the trace; every number comes verbatim
 * from the server record. */
export function traceLabel(rec: TraceRecord): string {
  return (
    `k=${rec.k}  w=${formatNumber(rec.w)}  energy=${formatNumber(rec.energy)}  ` +
    `changed=${rec.changed_pixels}`
  );
}

export function formatNumber(v: number): string {
  if (Number.isInteger(v)) return String(v);
  return v.toFixed(Math.abs(v) >= 100 ? 1 : 3);
}

// ------------------------------------------------ one request per drag gate

export type DragAction =
  | { kind: "none" }
  | { kind: "preview"; rect: Rect }
  | { kind: "warning"; message: string }
  | { kind: "request"; rect: Rect };

/** Pointer-event reducer enforcing exactly one cutout request per completed
 * drag; a new drag implies cancelling any in-flight request. */
export class DragTracker {
  private startX = 0;
  private startY = 0;
  private dragging = false;
  requestsIssued = 0;

  constructor(
    private imageWidth: number,
    private imageHeight: number
  ) {}

  down(x: number, y: number): DragAction {
    this.dragging = true;
    this.startX = x;
    this.startY = y;
    return { kind: "none" };
  }

  move(x: number, y: number): DragAction {
    if (!this.dragging) return { kind: "none" };
    const rect = rectFromDrag(this.startX, this.startY, x, y, this.imageWidth, this.imageHeight);
    return rect ? { kind: "preview", rect } : { kind: "none" };
  }

  up(x: number, y: number): DragAction {
    if (!this.dragging) return { kind: "none" };
    this.dragging = false;
    const rect = rectFromDrag(this.startX, this.startY, x, y, this.imageWidth, this.imageHeight);
    if (!rect || isDegenerate(rect)) {
      return { kind: "warning", message: `rectangle must be at least ${MIN_RECT_PX}x${MIN_RECT_PX} px` };
    }
    this.requestsIssued++;
    return { kind: "request", rect };
  }
}

// ----------------------------------------------------------------- base64

export function b64ToBytes(b64: string): Uint8Array<ArrayBuffer> {
  if (typeof atob === "function") {
    const bin = atob(b64);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
    return out;
  }
  const buf = Buffer.from(b64, "base64");
  const out = new Uint8Array(buf.length);
  out.set(buf);
  return out;
}

export function bytesToB64(bytes: Uint8Array): string {
  if (typeof btoa === "function") {
    let bin = "";
    for (let i = 0; i < bytes.length; i++) bin += String.fromCharCode(bytes[i]);
    return btoa(bin);
  }
  return Buffer.from(bytes).toString("base64");
}
