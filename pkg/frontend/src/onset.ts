/**
 * Window-placement math for onset correction.
 *
 * The extraction window is always exactly 3.0 s wide; placements snap to the
 * extractor's 0.1 s scan grid and clamp inside the source recording.
 */

export const WINDOW_S = 3.0;
export const GRID_S = 0.1;

/** Round to the 0.1 s grid (exact to one decimal to dodge float dust). */
export function snapToGrid(seconds: number): number {
  return Math.round(seconds * 10) / 10;
}

/** Latest grid-aligned start that keeps the full window inside the source. */
export function maxStart(durationS: number): number {
  const limit = Math.max(0, durationS - WINDOW_S);
  return Math.floor(limit * 10 + 1e-9) / 10;
}

/** Clamp then snap a raw drag position; result is always a legal placement. */
export function placeWindow(rawStartS: number, durationS: number): number {
  const snapped = snapToGrid(Math.min(Math.max(rawStartS, 0), durationS));
  return Math.min(Math.max(snapped, 0), maxStart(durationS));
}

/** Map a pixel offset on the source spectrogram back to seconds. */
export function pxToSeconds(px: number, widthPx: number, durationS: number): number {
  if (widthPx <= 0) return 0;
  return (px / widthPx) * durationS;
}

/** Window width in pixels at the current rendering scale (zoom-independent). */
export function windowWidthPx(widthPx: number, durationS: number): number {
  if (durationS <= 0) return 0;
  return (WINDOW_S / durationS) * widthPx;
}

export function isDistinctFromOriginal(startS: number, originalStartS: number): boolean {
  return Math.abs(startS - originalStartS) >= GRID_S - 1e-9;
}
