import type { BBox } from "./types";

export interface PixelRect {
  left: number;
  top: number;
  width: number;
  height: number;
}

/**
 * Scale a normalized bounding box to the rendered image size. Called on
 * every load and resize, so the rectangle stays exact at any window size.
 */
export function overlayRect(bbox: BBox, renderedWidth: number, renderedHeight: number): PixelRect {
  return {
    left: bbox.x * renderedWidth,
    top: bbox.y * renderedHeight,
    width: bbox.w * renderedWidth,
    height: bbox.h * renderedHeight,
  };
}
