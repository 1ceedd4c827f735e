/**
 * Screen <-> image pixel coordinate mapping.
 *
 * Clicks must be reported in image pixel space no matter how the browser
 * scales the element (zoom, CSS transforms, responsive layout). Using the
 * element's bounding rect makes the displayed-to-native ratio explicit, so
 * the mapping is zoom-independent by construction.
 */

export interface ElementRect {
  left: number;
  top: number;
  width: number;
  height: number;
}

export interface PixelPoint {
  x: number;
  y: number;
}

/** Map a client (viewport) position to integer image pixel coordinates.
 * Returns null when the position falls outside the displayed element. */
export function clientToImage(
  clientX: number,
  clientY: number,
  rect: ElementRect,
  imageWidth: number,
  imageHeight: number,
): PixelPoint | null {
  if (rect.width <= 0 || rect.height <= 0) return null;
  const fx = (clientX - rect.left) / rect.width;
  const fy = (clientY - rect.top) / rect.height;
  if (fx < 0 || fx >= 1 || fy < 0 || fy >= 1) return null;
  return {
    x: clamp(Math.floor(fx * imageWidth), 0, imageWidth - 1),
    y: clamp(Math.floor(fy * imageHeight), 0, imageHeight - 1),
  };
}

/** Map an image pixel (its center) back to a client position, for overlays. */
export function imageToClient(
  point: PixelPoint,
  rect: ElementRect,
  imageWidth: number,
  imageHeight: number,
): { clientX: number; clientY: number } {
  return {
    clientX: rect.left + ((point.x + 0.5) / imageWidth) * rect.width,
    clientY: rect.top + ((point.y + 0.5) / imageHeight) * rect.height,
  };
}

function clamp(v: number, lo: number, hi: number): number {
  return Math.max(lo, Math.min(hi, v));
}
