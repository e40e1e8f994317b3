/** Screen <-> image coordinate mapping.
 *
 * Zoom is restricted to integer levels and pans are kept integral, so
 * screen = image * zoom + pan is exactly invertible: both directions
 * stay inside the float-exact integer range for any canvas-sized input.
 */

export interface ViewTransform {
  zoom: number;
  panX: number;
  panY: number;
}

export const MIN_ZOOM = 1;
export const MAX_ZOOM = 16;

export function identityView(): ViewTransform {
  return { zoom: 1, panX: 0, panY: 0 };
}

export function imageToScreen(
  t: ViewTransform,
  x: number,
  y: number,
): [number, number] {
  return [x * t.zoom + t.panX, y * t.zoom + t.panY];
}

export function screenToImage(
  t: ViewTransform,
  sx: number,
  sy: number,
): [number, number] {
  return [(sx - t.panX) / t.zoom, (sy - t.panY) / t.zoom];
}

export function pan(t: ViewTransform, dx: number, dy: number): ViewTransform {
  return { ...t, panX: t.panX + Math.round(dx), panY: t.panY + Math.round(dy) };
}

/** Step zoom by +-1 level, keeping the image point under `focus` fixed
 * up to the integer-pan rounding. */
export function zoomStep(
  t: ViewTransform,
  direction: 1 | -1,
  focusX: number,
  focusY: number,
): ViewTransform {
  const zoom = Math.min(MAX_ZOOM, Math.max(MIN_ZOOM, t.zoom + direction));
  if (zoom === t.zoom) return t;
  const [ix, iy] = screenToImage(t, focusX, focusY);
  return {
    zoom,
    panX: Math.round(focusX - ix * zoom),
    panY: Math.round(focusY - iy * zoom),
  };
}
