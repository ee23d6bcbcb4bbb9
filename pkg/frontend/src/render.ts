// Canvas-side pure helpers: projection-to-pixel mapping, hit testing, and
// the raster conversions for the three panes. Small rasters are drawn with
// nearest-neighbour scaling so desk-scale images stay crisp.

import type { ManifoldPoint } from "./api.js";

export const SCATTER_PAD = 12;

// projected manifold coordinates live in [-1, 1]^2; v points up on screen
export function projToPixel(
  u: number,
  v: number,
  size: number
): [number, number] {
  const span = size - 2 * SCATTER_PAD;
  return [
    SCATTER_PAD + ((u + 1) / 2) * span,
    SCATTER_PAD + ((1 - v) / 2) * span,
  ];
}

export function pixelToProj(
  x: number,
  y: number,
  size: number
): [number, number] {
  const span = size - 2 * SCATTER_PAD;
  return [((x - SCATTER_PAD) / span) * 2 - 1, 1 - ((y - SCATTER_PAD) / span) * 2];
}

export function hitTest(
  points: ManifoldPoint[],
  x: number,
  y: number,
  size: number,
  radiusPx = 8
): number | null {
  let best: number | null = null;
  let bestDist = radiusPx * radiusPx;
  for (const p of points) {
    const [px, py] = projToPixel(p.u, p.v, size);
    const d = (px - x) ** 2 + (py - y) ** 2;
    if (d <= bestDist) {
      bestDist = d;
      best = p.id;
    }
  }
  return best;
}

export const CLUSTER_COLORS: [number, number, number][] = [
  [31, 119, 180],
  [255, 127, 14],
  [44, 160, 44],
  [214, 39, 40],
  [148, 103, 189],
];

export const CLASS_COLORS: [number, number, number][] = [
  [0, 0, 0], // background (never drawn)
  [70, 130, 180],
  [255, 215, 0],
  [60, 179, 113],
  [220, 20, 60],
];

export const CLASS_NAMES = ["background", "body", "bone", "organ A", "organ B"];

export function grayscaleToRgba(
  data: Float32Array,
  width: number,
  height: number
): Uint8ClampedArray {
  const out = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    const v = Math.round(Math.min(1, Math.max(0, data[i])) * 255);
    out[i * 4] = out[i * 4 + 1] = out[i * 4 + 2] = v;
    out[i * 4 + 3] = 255;
  }
  return out;
}

// segmentation overlay: argmax class colour (background and hidden classes
// fully transparent)
export function labelOverlayRgba(
  label: Float32Array,
  width: number,
  height: number,
  channels: number,
  hidden: ReadonlySet<number>,
  alpha = 160
): Uint8ClampedArray {
  const out = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    let bestC = 0;
    let bestP = -Infinity;
    for (let c = 0; c < channels; c++) {
      const p = label[i * channels + c];
      if (p > bestP) {
        bestP = p;
        bestC = c;
      }
    }
    if (bestC === 0 || hidden.has(bestC)) continue;
    const [r, g, b] = CLASS_COLORS[bestC % CLASS_COLORS.length];
    out[i * 4] = r;
    out[i * 4 + 1] = g;
    out[i * 4 + 2] = b;
    out[i * 4 + 3] = alpha;
  }
  return out;
}

// confidence heatmap with a FIXED [0,1] scale (comparable across probes):
// 0 -> deep blue, 0.5 -> near white, 1 -> strong red
export function confidenceColor(value: number): [number, number, number] {
  const v = Math.min(1, Math.max(0, value));
  if (v <= 0.5) {
    const k = v / 0.5;
    return [Math.round(40 + 215 * k), Math.round(60 + 195 * k), 255];
  }
  const k = (v - 0.5) / 0.5;
  return [255, Math.round(255 - 195 * k), Math.round(255 - 215 * k)];
}

export function confidenceToRgba(
  conf: Float32Array,
  width: number,
  height: number
): Uint8ClampedArray {
  const out = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    const [r, g, b] = confidenceColor(conf[i]);
    out[i * 4] = r;
    out[i * 4 + 1] = g;
    out[i * 4 + 2] = b;
    out[i * 4 + 3] = 255;
  }
  return out;
}

export function drawRaster(
  canvas: HTMLCanvasElement,
  rgba: Uint8ClampedArray,
  width: number,
  height: number
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const off = document.createElement("canvas");
  off.width = width;
  off.height = height;
  const pixels = new Uint8ClampedArray(rgba); // pin to a plain ArrayBuffer
  off.getContext("2d")!.putImageData(new ImageData(pixels, width, height), 0, 0);
  ctx.imageSmoothingEnabled = false; // nearest-neighbour upscale
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}
