/** Label-map rendering: raw label bytes -> RGBA pixels plus the legend.
 *
 * The UI never recomposes masks itself; it draws exactly the label map the
 * service returned (the bytes whose hash the service reports).
 */

import { base64ToBytes, sha256Hex } from './hash.js'
import type { LayoutPayload } from './types.js'

/** Part colors; index 0 (background) is black. Matches the service PNG palette. */
const PALETTE: ReadonlyArray<readonly [number, number, number]> = [
  [0, 0, 0], [230, 76, 60], [52, 152, 219], [46, 204, 113], [241, 196, 15],
  [155, 89, 182], [231, 126, 34], [26, 188, 156], [149, 165, 166],
  [236, 112, 160], [127, 140, 141], [99, 110, 250], [190, 120, 80],
]

export function labelColor(label: number): readonly [number, number, number] {
  return PALETTE[label % PALETTE.length]
}

export interface DecodedLayout {
  width: number
  height: number
  labels: Uint8Array
  hash: string
}

export function decodeLayout(payload: LayoutPayload): DecodedLayout {
  const labels = base64ToBytes(payload.label_base64)
  if (labels.length !== payload.width * payload.height) {
    throw new Error(
      `label buffer is ${labels.length} bytes, expected ${payload.width * payload.height}`,
    )
  }
  return { width: payload.width, height: payload.height, labels, hash: sha256Hex(labels) }
}

/** RGBA buffer suitable for ImageData. */
export function labelsToRgba(decoded: DecodedLayout): Uint8ClampedArray<ArrayBuffer> {
  const out = new Uint8ClampedArray(new ArrayBuffer(decoded.labels.length * 4))
  for (let i = 0; i < decoded.labels.length; i++) {
    const [r, g, b] = labelColor(decoded.labels[i])
    out[i * 4] = r
    out[i * 4 + 1] = g
    out[i * 4 + 2] = b
    out[i * 4 + 3] = 255
  }
  return out
}

export interface LegendEntry {
  part: string
  label: number
  color: string
}

/** One legend row per part in canonical order: css color plus label id. */
export function legend(partNames: string[], present: string[]): LegendEntry[] {
  return partNames
    .map((part, k) => ({ part, label: k + 1, color: cssColor(labelColor(k + 1)) }))
    .filter((e) => present.includes(e.part))
}

export function cssColor([r, g, b]: readonly [number, number, number]): string {
  return `rgb(${r}, ${g}, ${b})`
}
