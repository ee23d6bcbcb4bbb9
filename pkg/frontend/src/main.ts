// Explorer wiring: scatter of the projected manifold, three synchronized
// panes (synthesis, segmentation overlay, confidence heatmap), and a style
// interpolation slider between two selected points.

import { ApiImage, decodeImage, InterpolateStep, ServiceClient } from "./api.js";
import { debounce, LatestWins } from "./debounce.js";
import {
  CLASS_COLORS,
  CLASS_NAMES,
  CLUSTER_COLORS,
  confidenceColor,
  confidenceToRgba,
  drawRaster,
  grayscaleToRgba,
  hitTest,
  labelOverlayRgba,
  projToPixel,
} from "./render.js";
import {
  decodeQuery,
  encodeQuery,
  ExplorerState,
  initialState,
  selectPoint,
  setLabel,
  setT,
  toggleClass,
} from "./state.js";

const INTERP_STEPS = 11; // slider grid; endpoints are exact direct probes

const client = new ServiceClient("");
const probes = new LatestWins();

let state: ExplorerState = initialState();
let lastImage: ApiImage | null = null;
let lastSeg: { label: ApiImage; confidence: ApiImage } | null = null;
const styleCache = new Map<number, number[]>();
let interpFrames: InterpolateStep[] | null = null;
let interpKey = "";

const $ = (id: string) => document.getElementById(id)!;
const scatter = $("scatter") as HTMLCanvasElement;
const imagePane = $("pane-image") as HTMLCanvasElement;
const segPane = $("pane-seg") as HTMLCanvasElement;
const confPane = $("pane-conf") as HTMLCanvasElement;
const slider = $("t-slider") as HTMLInputElement;
const labelSelect = $("label-select") as HTMLSelectElement;
const notices = $("notices");

function notify(message: string): void {
  const div = document.createElement("div");
  div.className = "notice";
  div.textContent = message;
  const close = document.createElement("button");
  close.textContent = "x";
  close.onclick = () => div.remove();
  div.appendChild(close);
  notices.appendChild(div);
}

function syncUrl(): void {
  const query = encodeQuery(state);
  history.replaceState(null, "", query ? `?${query}` : location.pathname);
}

function drawScatter(): void {
  const ctx = scatter.getContext("2d")!;
  const size = scatter.width;
  ctx.clearRect(0, 0, size, size);
  ctx.strokeStyle = "#ccc";
  ctx.strokeRect(0.5, 0.5, size - 1, size - 1);
  if (!state.points.length) {
    ctx.fillStyle = "#777";
    ctx.fillText("no manifold points loaded", 16, size / 2);
    return;
  }
  for (const p of state.points) {
    const [x, y] = projToPixel(p.u, p.v, size);
    const color =
      p.cluster === null
        ? [46, 139, 87]
        : CLUSTER_COLORS[p.cluster % CLUSTER_COLORS.length];
    ctx.fillStyle = `rgb(${color[0]},${color[1]},${color[2]})`;
    ctx.beginPath();
    ctx.arc(x, y, 4, 0, 2 * Math.PI);
    ctx.fill();
    const order = state.selected.indexOf(p.id);
    if (order >= 0) {
      ctx.strokeStyle = order === 0 ? "#000" : "#d22";
      ctx.lineWidth = 2;
      ctx.beginPath();
      ctx.arc(x, y, 7, 0, 2 * Math.PI);
      ctx.stroke();
      ctx.lineWidth = 1;
    }
  }
}

function renderPanes(): void {
  if (!lastImage || !lastSeg) return;
  const image = lastImage;
  const gray = decodeImage(image);
  drawRaster(imagePane, grayscaleToRgba(gray, image.width, image.height),
    image.width, image.height);

  const seg = lastSeg.label;
  const base = grayscaleToRgba(gray, image.width, image.height);
  const overlay = labelOverlayRgba(
    decodeImage(seg), seg.width, seg.height, seg.channels,
    new Set(state.hiddenClasses)
  );
  for (let i = 0; i < overlay.length; i += 4) {
    const a = overlay[i + 3] / 255;
    if (a === 0) continue;
    base[i] = overlay[i] * a + base[i] * (1 - a);
    base[i + 1] = overlay[i + 1] * a + base[i + 1] * (1 - a);
    base[i + 2] = overlay[i + 2] * a + base[i + 2] * (1 - a);
  }
  drawRaster(segPane, base, seg.width, seg.height);
  const conf = lastSeg.confidence;
  drawRaster(confPane, confidenceToRgba(decodeImage(conf), conf.width, conf.height),
    conf.width, conf.height);
}

async function showImage(image: ApiImage): Promise<void> {
  const result = await probes.run(() => client.segment(image));
  if (result === null) return; // superseded
  lastImage = image;
  lastSeg = result;
  renderPanes();
}

async function probePoint(styleId: number): Promise<void> {
  const result = await probes.run(async () => {
    const synth = await client.synthesize({
      style_id: styleId,
      label_id: state.labelId,
    });
    const seg = await client.segment(synth.image);
    return { synth, seg };
  });
  if (result === null) return;
  styleCache.set(styleId, result.synth.style);
  lastImage = result.synth.image;
  lastSeg = result.seg;
  renderPanes();
}

async function ensureInterpFrames(): Promise<InterpolateStep[] | null> {
  const [a, b] = state.selected;
  const styleA = styleCache.get(a);
  const styleB = styleCache.get(b);
  if (!styleA || !styleB) return null;
  const key = `${a}|${b}|${state.labelId}`;
  if (interpFrames && interpKey === key) return interpFrames;
  const resp = await client.interpolate(styleA, styleB, INTERP_STEPS, state.labelId);
  interpFrames = resp.steps;
  interpKey = key;
  return interpFrames;
}

async function probeInterpolated(t: number): Promise<void> {
  const frames = await ensureInterpFrames();
  if (!frames) return;
  const index = Math.round(t * (frames.length - 1));
  await showImage(frames[index].image);
}

const debouncedInterp = debounce((t: number) => {
  void probeInterpolated(t).catch((err) => notify(String(err)));
}, 150);

function refreshControls(): void {
  slider.disabled = state.selected.length !== 2;
  if (state.t !== null) slider.value = String(state.t);
  if ([...labelSelect.options].some((o) => o.value === state.labelId)) {
    labelSelect.value = state.labelId;
  }
  document.querySelectorAll<HTMLInputElement>("#class-toggles input").forEach((el) => {
    el.checked = !state.hiddenClasses.includes(Number(el.dataset.classId));
  });
}

function applyState(next: ExplorerState, probe = true): void {
  state = next;
  drawScatter();
  refreshControls();
  syncUrl();
  if (!probe) {
    renderPanes(); // overlay toggles re-render from the last responses
    return;
  }
  const target = state.selected[state.selected.length - 1];
  if (state.selected.length === 2 && state.t !== null && state.t > 0) {
    debouncedInterp(state.t);
  } else if (target !== undefined) {
    void probePoint(target).catch((err) => notify(String(err)));
  }
}

function drawConfidenceLegend(): void {
  const legend = $("conf-legend") as HTMLCanvasElement;
  const ctx = legend.getContext("2d")!;
  for (let x = 0; x < legend.width; x++) {
    const [r, g, b] = confidenceColor(x / (legend.width - 1));
    ctx.fillStyle = `rgb(${r},${g},${b})`;
    ctx.fillRect(x, 0, 1, legend.height);
  }
}

async function boot(): Promise<void> {
  drawConfidenceLegend();
  const toggles = $("class-toggles");
  CLASS_NAMES.forEach((name, c) => {
    if (c === 0) return;
    const label = document.createElement("label");
    const box = document.createElement("input");
    box.type = "checkbox";
    box.checked = true;
    box.dataset.classId = String(c);
    box.onchange = () => applyState(toggleClass(state, c), false);
    const swatch = document.createElement("span");
    swatch.className = "swatch";
    const [r, g, b] = CLASS_COLORS[c];
    swatch.style.background = `rgb(${r},${g},${b})`;
    label.append(box, swatch, ` ${name}`);
    toggles.appendChild(label);
  });
  try {
    const [points, labels] = await Promise.all([client.manifold(), client.labels()]);
    for (const entry of labels) {
      const option = document.createElement("option");
      option.value = entry.id;
      option.textContent = entry.id;
      labelSelect.appendChild(option);
    }
    const restored = decodeQuery(location.search.replace(/^\?/, ""), points);
    applyState(restored, false);
    for (const id of restored.selected) {
      await probePoint(id); // fills the style cache and the panes
    }
    if (restored.t !== null && restored.t > 0) {
      debouncedInterp(restored.t);
    }
  } catch (err) {
    notify(`service unreachable: ${err}`);
    drawScatter();
  }
}

scatter.addEventListener("click", (ev) => {
  const rect = scatter.getBoundingClientRect();
  const hit = hitTest(
    state.points,
    ev.clientX - rect.left,
    ev.clientY - rect.top,
    scatter.width
  );
  if (hit !== null) applyState(selectPoint(state, hit));
});

slider.addEventListener("input", () => {
  applyState(setT(state, Number(slider.value)));
});

labelSelect.addEventListener("change", () => {
  interpFrames = null; // frames belong to the previous label
  applyState(setLabel(state, labelSelect.value));
});

void boot();
