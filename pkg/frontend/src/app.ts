// Browser entry point: demo-scene loading, rectangle drawing, parameter
// controls, overlay compositing, and the trace scrubber. All numbers shown
// (IoU, w, energy, changed pixels) come verbatim from server responses.

import {
  CutoutParamsUI,
  CutoutResponse,
  DragTracker,
  Pgm,
  Rect,
  b64ToBytes,
  buildCutoutRequest,
  maskOverlayRgba,
  parsePgm,
  pmapHeatRgba,
  traceLabel,
  formatNumber,
  validateParams,
} from "./logic.js";

interface SessionState {
  imageBitmap: ImageBitmap | null;
  imageB64: string | null;
  width: number;
  height: number;
  pmapB64: string | null;
  pmap: Pgm | null;
  gtMaskB64: string | null;
  rect: Rect | null;
  previewRect: Rect | null;
  response: CutoutResponse | null;
  traceIndex: number; // slider position; trace.length means "final mask"
  showPmap: boolean;
  showMask: boolean;
  inFlight: AbortController | null;
}

const state: SessionState = {
  imageBitmap: null,
  imageB64: null,
  width: 0,
  height: 0,
  pmapB64: null,
  pmap: null,
  gtMaskB64: null,
  rect: null,
  previewRect: null,
  response: null,
  traceIndex: 0,
  showPmap: false,
  showMask: true,
  inFlight: null,
};

const $ = <T extends HTMLElement>(id: string): T => document.getElementById(id) as T;

const canvas = $("view") as unknown as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
let tracker: DragTracker | null = null;

function setStatus(text: string, isError = false) {
  const el = $("status");
  el.textContent = text;
  el.className = isError ? "status error" : "status";
}

function currentParams(): CutoutParamsUI {
  return {
    alpha: parseFloat(($("alpha") as HTMLInputElement).value),
    b: parseFloat(($("b") as HTMLInputElement).value),
    max_iters: parseInt(($("iters") as HTMLInputElement).value, 10),
    gamma: parseFloat(($("gamma") as HTMLInputElement).value),
    seed: parseInt(($("seed") as HTMLInputElement).value, 10),
  };
}

function pgmFromB64(b64: string): Pgm {
  return parsePgm(b64ToBytes(b64));
}

function putOverlay(rgba: Uint8ClampedArray<ArrayBuffer>, w: number, h: number) {
  const off = document.createElement("canvas");
  off.width = w;
  off.height = h;
  off.getContext("2d")!.putImageData(new ImageData(rgba, w, h), 0, 0);
  ctx.drawImage(off, 0, 0);
}

function selectedMaskB64(): string | null {
  const resp = state.response;
  if (!resp) return null;
  if (state.traceIndex < resp.trace.length) {
    return resp.trace[state.traceIndex]?.mask_pgm_b64 ?? resp.mask_pgm_b64;
  }
  return resp.mask_pgm_b64;
}

function render() {
  if (!state.imageBitmap) return;
  canvas.width = state.width;
  canvas.height = state.height;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(state.imageBitmap, 0, 0);

  if (state.showPmap && state.pmap) {
    putOverlay(pmapHeatRgba(state.pmap), state.pmap.width, state.pmap.height);
  }
  if (state.showMask) {
    const maskB64 = selectedMaskB64();
    if (maskB64) {
      const pgm = pgmFromB64(maskB64);
      putOverlay(maskOverlayRgba(pgm), pgm.width, pgm.height);
    }
  }
  const rect = state.previewRect ?? state.rect;
  if (rect) {
    ctx.strokeStyle = "#ffcc00";
    ctx.lineWidth = 2;
    ctx.strokeRect(rect.x + 0.5, rect.y + 0.5, rect.w, rect.h);
    $("rect-echo").textContent = `rect ${rect.x},${rect.y},${rect.w},${rect.h}`;
  }
}

function renderTracePanel() {
  const resp = state.response;
  const slider = $("trace") as HTMLInputElement;
  const label = $("trace-label");
  if (!resp || resp.trace.length === 0) {
    slider.disabled = true;
    label.textContent = "no trace yet";
    return;
  }
  slider.disabled = false;
  slider.max = String(resp.trace.length);
  if (state.traceIndex > resp.trace.length) state.traceIndex = resp.trace.length;
  slider.value = String(state.traceIndex);
  if (state.traceIndex < resp.trace.length) {
    label.textContent = traceLabel(resp.trace[state.traceIndex]);
  } else {
    label.textContent = `final mask (${resp.trace.length} iterations, ${formatNumber(resp.timing_ms)} ms)`;
  }
  $("iou").textContent = resp.iou !== undefined ? `IoU ${resp.iou.toFixed(4)}` : "IoU n/a (no ground truth)";
}

async function requestCutout(rect: Rect) {
  if (!state.imageB64) return;
  const problem = validateParams(currentParams());
  if (problem) {
    setStatus(`invalid parameters: ${problem}`, true);
    return;
  }
  if (!state.pmapB64) {
    setStatus("no P-map loaded; load the demo scene first", true);
    return;
  }
  state.inFlight?.abort();
  const controller = new AbortController();
  state.inFlight = controller;
  setStatus("cutting…");
  try {
    const body = buildCutoutRequest({
      imageB64: state.imageB64,
      rect,
      pmapB64: state.pmapB64,
      gtMaskB64: state.gtMaskB64 ?? undefined,
      params: currentParams(),
      includeTraceMasks: true,
    });
    const resp = await fetch("/cutout", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
      signal: controller.signal,
    });
    const payload = await resp.json();
    if (!resp.ok) {
      setStatus(`error: ${payload.error} — ${payload.detail}`, true);
      return;
    }
    state.response = payload as CutoutResponse;
    state.traceIndex = state.response.trace.length; // final mask first
    setStatus(`done in ${formatNumber(state.response.timing_ms)} ms`);
    renderTracePanel();
    render();
  } catch (err) {
    if ((err as Error).name !== "AbortError") {
      setStatus(`request failed: ${err}`, true);
    }
  } finally {
    if (state.inFlight === controller) state.inFlight = null;
  }
}

async function loadDemo() {
  const seed = parseInt(($("demo-seed") as HTMLInputElement).value, 10) || 7;
  setStatus("loading demo scene…");
  try {
    const resp = await fetch(`/synth?seed=${seed}`);
    const payload = await resp.json();
    if (!resp.ok) {
      setStatus(`error: ${payload.error} — ${payload.detail}`, true);
      return;
    }
    state.imageB64 = payload.image_png_b64;
    state.width = payload.width;
    state.height = payload.height;
    const target = payload.targets[0];
    state.pmapB64 = target.oracle_pmap_pgm_b64;
    state.pmap = pgmFromB64(state.pmapB64!);
    state.gtMaskB64 = target.gt_mask_pgm_b64;
    state.rect = target.rect;
    state.previewRect = null;
    state.response = null;
    const blob = new Blob([b64ToBytes(state.imageB64!)], { type: "image/png" });
    state.imageBitmap = await createImageBitmap(blob);
    tracker = new DragTracker(state.width, state.height);
    setStatus(`scene seed ${payload.seed} loaded; draw a rectangle or use the suggested one`);
    renderTracePanel();
    render();
  } catch (err) {
    setStatus(`demo load failed: ${err}`, true);
  }
}

function canvasPos(ev: PointerEvent): [number, number] {
  const bounds = canvas.getBoundingClientRect();
  return [
    ((ev.clientX - bounds.left) / bounds.width) * canvas.width,
    ((ev.clientY - bounds.top) / bounds.height) * canvas.height,
  ];
}

function wire() {
  $("load-demo").addEventListener("click", () => void loadDemo());
  $("run-suggested").addEventListener("click", () => {
    if (state.rect) void requestCutout(state.rect);
  });

  canvas.addEventListener("pointerdown", (ev) => {
    if (!tracker) return;
    canvas.setPointerCapture(ev.pointerId);
    tracker.down(...canvasPos(ev));
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (!tracker) return;
    const action = tracker.move(...canvasPos(ev));
    if (action.kind === "preview") {
      state.previewRect = action.rect;
      render();
    }
  });
  canvas.addEventListener("pointerup", (ev) => {
    if (!tracker) return;
    const action = tracker.up(...canvasPos(ev));
    state.previewRect = null;
    if (action.kind === "warning") {
      setStatus(action.message, true);
      render();
    } else if (action.kind === "request") {
      state.rect = action.rect;
      render();
      void requestCutout(action.rect);
    }
  });

  ($("trace") as HTMLInputElement).addEventListener("input", (ev) => {
    state.traceIndex = parseInt((ev.target as HTMLInputElement).value, 10);
    renderTracePanel();
    render();
  });
  ($("show-pmap") as HTMLInputElement).addEventListener("change", (ev) => {
    state.showPmap = (ev.target as HTMLInputElement).checked;
    render();
  });
  ($("show-mask") as HTMLInputElement).addEventListener("change", (ev) => {
    state.showMask = (ev.target as HTMLInputElement).checked;
    render();
  });
}

wire();
setStatus("load the demo scene to begin");
