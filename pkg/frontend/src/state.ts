import type { Label, ManifestEntry } from './api.js';
import { nudgeSelection, placeSelection, type Point } from './geometry.js';

/** A previously submitted crop drawn over the image. */
export interface Overlay {
  x: number;
  y: number;
  label: Label;
}

/**
 * Everything the page renders from. State is replaced, never mutated, and
 * nothing here survives a reload: the gallery and the overlays are rebuilt
 * from the backend on every load, so the manifest is the only persistence.
 */
export interface UiState {
  imageId: string | null;
  imageWidth: number;
  imageHeight: number;
  /** Top-left of the fixed 50x50 selection box, in image coordinates. */
  selection: Point | null;
  pendingLabel: Label;
  overlays: Overlay[];
  /** Display magnification only; selection coordinates never scale with it. */
  zoom: number;
  /** A submission is in flight; blocks further submits until it settles. */
  busy: boolean;
  /** Non-fatal message (e.g. duplicate submission). */
  notice: string | null;
  /** Error banner text; null hides the banner. */
  error: string | null;
}

export const ZOOM_MIN = 1;
export const ZOOM_MAX = 8;

export function initialState(): UiState {
  return {
    imageId: null,
    imageWidth: 0,
    imageHeight: 0,
    selection: null,
    pendingLabel: 'lesion',
    overlays: [],
    zoom: 1,
    busy: false,
    notice: null,
    error: null,
  };
}

/** Overlays belonging to one source image, recovered from the manifest. */
export function overlaysFor(entries: ManifestEntry[], imageId: string): Overlay[] {
  return entries
    .filter((e) => e.imageId === imageId)
    .map((e) => ({ x: e.x, y: e.y, label: e.label }));
}

/** Switch to a loaded image: fresh selection and zoom, overlays from the manifest. */
export function selectImage(
  state: UiState,
  imageId: string,
  width: number,
  height: number,
  overlays: Overlay[],
): UiState {
  return {
    ...state,
    imageId,
    imageWidth: width,
    imageHeight: height,
    selection: null,
    overlays,
    zoom: 1,
    notice: null,
    error: null,
  };
}

/** Center the selection on a click at image coordinates. */
export function placeAt(state: UiState, imgX: number, imgY: number): UiState {
  if (state.imageId === null) return state;
  return {
    ...state,
    selection: placeSelection(imgX, imgY, state.imageWidth, state.imageHeight),
    notice: null,
    error: null,
  };
}

/** Arrow-key nudge; no-op until a selection exists. */
export function nudge(state: UiState, dx: number, dy: number): UiState {
  if (state.selection === null) return state;
  return {
    ...state,
    selection: nudgeSelection(
      state.selection,
      dx,
      dy,
      state.imageWidth,
      state.imageHeight,
    ),
  };
}

export function setLabel(state: UiState, label: Label): UiState {
  return { ...state, pendingLabel: label };
}

/** Double/halve the magnification within [ZOOM_MIN, ZOOM_MAX]. */
export function zoomBy(state: UiState, factor: number): UiState {
  const zoom = Math.min(Math.max(state.zoom * factor, ZOOM_MIN), ZOOM_MAX);
  return { ...state, zoom };
}

/**
 * Gate a submission: requires a selection and no submission already in
 * flight (POSTs are serialized by this flag). Returns the state unchanged
 * when the gate fails, so callers can detect refusal by identity.
 */
export function beginSubmit(state: UiState): UiState {
  if (state.selection === null || state.busy) return state;
  return { ...state, busy: true, notice: null, error: null };
}

/** 2xx: the submitted box joins the overlay list under its label. */
export function submitSucceeded(state: UiState): UiState {
  if (state.selection === null) return state;
  const overlay: Overlay = {
    x: state.selection.x,
    y: state.selection.y,
    label: state.pendingLabel,
  };
  return { ...state, busy: false, overlays: [...state.overlays, overlay] };
}

/**
 * Non-2xx: a 409 duplicate is a non-fatal notice (the region is already
 * labeled; the overlay list is left alone), anything else shows the
 * server's message in the error banner verbatim.
 */
export function submitFailed(state: UiState, status: number, message: string): UiState {
  if (status === 409) {
    return { ...state, busy: false, notice: message };
  }
  return { ...state, busy: false, error: message };
}
