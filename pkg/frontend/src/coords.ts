/** Pixel <-> normalized coordinate conversion for a square canvas.
 *
 * Normalized space is [-1, 1] with x rightward and y downward; pixel space
 * is [0, size). Conversions round-trip within one canvas pixel.
 */

import type { NormBox } from './types.js'

export interface PixelBox {
  left: number
  top: number
  width: number
  height: number
}

export function pixelToNorm(px: number, size: number): number {
  return (px / size) * 2 - 1
}

export function normToPixel(x: number, size: number): number {
  return ((x + 1) / 2) * size
}

export function pixelDeltaToNorm(dpx: number, size: number): number {
  return (dpx / size) * 2
}

export function boxToPixels(box: NormBox, size: number): PixelBox {
  const left = normToPixel(box[0], size)
  const top = normToPixel(box[1], size)
  return {
    left,
    top,
    width: normToPixel(box[2], size) - left,
    height: normToPixel(box[3], size) - top,
  }
}

export function pixelsToBox(px: PixelBox, size: number): NormBox {
  return [
    pixelToNorm(px.left, size),
    pixelToNorm(px.top, size),
    pixelToNorm(px.left + px.width, size),
    pixelToNorm(px.top + px.height, size),
  ]
}

export function translateBox(box: NormBox, dxPx: number, dyPx: number, size: number): NormBox {
  const dx = pixelDeltaToNorm(dxPx, size)
  const dy = pixelDeltaToNorm(dyPx, size)
  return [box[0] + dx, box[1] + dy, box[2] + dx, box[3] + dy]
}

/** Scale a box about its center (resize-handle gesture). */
export function scaleBox(box: NormBox, sx: number, sy: number): NormBox {
  const cx = (box[0] + box[2]) / 2
  const cy = (box[1] + box[3]) / 2
  return [
    cx + (box[0] - cx) * sx,
    cy + (box[1] - cy) * sy,
    cx + (box[2] - cx) * sx,
    cy + (box[3] - cy) * sy,
  ]
}

export function clampBox(box: NormBox): NormBox {
  const clip = (v: number) => Math.max(-1, Math.min(1, v))
  return [clip(box[0]), clip(box[1]), clip(box[2]), clip(box[3])]
}
