// Explorer state and its pure transitions. The view is a function of this
// object plus the last service responses; the URL query encodes enough of it
// to restore an equivalent session on reload.

import type { ManifoldPoint } from "./api.js";

export interface ExplorerState {
  points: ManifoldPoint[];
  selected: number[]; // point ids, at most 2, selection order preserved
  labelId: string;
  t: number | null; // interpolation position, defined only with 2 selected
  hiddenClasses: number[]; // class ids removed from the segmentation overlay
}

export function initialState(points: ManifoldPoint[] = []): ExplorerState {
  return { points, selected: [], labelId: "reference", t: null, hiddenClasses: [] };
}

function normalizeT(selected: number[], t: number | null): number | null {
  return selected.length === 2 ? (t ?? 0) : null;
}

export function selectPoint(state: ExplorerState, id: number): ExplorerState {
  if (!state.points.some((p) => p.id === id)) return state;
  let selected: number[];
  if (state.selected.includes(id)) {
    selected = state.selected.filter((s) => s !== id);
  } else if (state.selected.length < 2) {
    selected = [...state.selected, id];
  } else {
    // keep the most recent anchor, swap in the new point
    selected = [state.selected[1], id];
  }
  return { ...state, selected, t: normalizeT(selected, state.t) };
}

export function setLabel(state: ExplorerState, labelId: string): ExplorerState {
  return { ...state, labelId };
}

export function setT(state: ExplorerState, t: number): ExplorerState {
  if (state.selected.length !== 2) return state;
  return { ...state, t: Math.min(1, Math.max(0, t)) };
}

export function toggleClass(state: ExplorerState, classId: number): ExplorerState {
  const hidden = state.hiddenClasses.includes(classId)
    ? state.hiddenClasses.filter((c) => c !== classId)
    : [...state.hiddenClasses, classId];
  return { ...state, hiddenClasses: hidden };
}

export function encodeQuery(state: ExplorerState): string {
  const params = new URLSearchParams();
  if (state.selected.length) params.set("sel", state.selected.join(","));
  if (state.labelId !== "reference") params.set("label", state.labelId);
  if (state.t !== null) params.set("t", String(state.t));
  if (state.hiddenClasses.length) params.set("hide", state.hiddenClasses.join(","));
  return params.toString();
}

export function decodeQuery(query: string, points: ManifoldPoint[]): ExplorerState {
  const params = new URLSearchParams(query);
  const known = new Set(points.map((p) => p.id));
  const selected = (params.get("sel") ?? "")
    .split(",")
    .filter((s) => s.length)
    .map(Number)
    .filter((id) => known.has(id))
    .slice(0, 2);
  const rawT = params.get("t");
  const t = rawT === null ? null : Number(rawT);
  return {
    points,
    selected,
    labelId: params.get("label") ?? "reference",
    t: normalizeT(selected, Number.isFinite(t as number) ? t : null),
    hiddenClasses: (params.get("hide") ?? "")
      .split(",")
      .filter((s) => s.length)
      .map(Number),
  };
}
