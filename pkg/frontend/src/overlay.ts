/**
 * View transforms between image pixels and canvas pixels, plus residual
 * badge levels. Pure functions so the overlay math is unit-testable.
 */

export interface Point {
  x: number;
  y: number;
}

export interface ViewTransform {
  zoom: number;
  panX: number;
  panY: number;
}

export const IDENTITY: ViewTransform = { zoom: 1, panX: 0, panY: 0 };

export const MIN_ZOOM = 0.25;
export const MAX_ZOOM = 16;

/** Residuals above this many pixels get the warning color. */
export const RESIDUAL_WARN_PX = 5.0;

export function imageToCanvas(t: ViewTransform, p: Point): Point {
  return { x: p.x * t.zoom + t.panX, y: p.y * t.zoom + t.panY };
}

export function canvasToImage(t: ViewTransform, p: Point): Point {
  return { x: (p.x - t.panX) / t.zoom, y: (p.y - t.panY) / t.zoom };
}

/** Zoom by a factor while keeping the given canvas point fixed. */
export function zoomAround(t: ViewTransform, canvasPoint: Point, factor: number): ViewTransform {
  const zoom = Math.min(MAX_ZOOM, Math.max(MIN_ZOOM, t.zoom * factor));
  const scale = zoom / t.zoom;
  return {
    zoom,
    panX: canvasPoint.x - (canvasPoint.x - t.panX) * scale,
    panY: canvasPoint.y - (canvasPoint.y - t.panY) * scale,
  };
}

export function pan(t: ViewTransform, dx: number, dy: number): ViewTransform {
  return { zoom: t.zoom, panX: t.panX + dx, panY: t.panY + dy };
}

export type ResidualLevel = 'ok' | 'warn';

export function residualLevel(px: number): ResidualLevel {
  return px > RESIDUAL_WARN_PX ? 'warn' : 'ok';
}

export function formatResidual(px: number): string {
  return px < 0.01 ? '<0.01 px' : `${px.toFixed(2)} px`;
}
