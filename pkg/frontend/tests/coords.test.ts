import { describe, expect, it } from 'vitest'

import {
  boxToPixels,
  clampBox,
  normToPixel,
  pixelDeltaToNorm,
  pixelsToBox,
  pixelToNorm,
  scaleBox,
  translateBox,
} from '../src/coords.js'
import type { NormBox } from '../src/types.js'

const SIZE = 256
const PX_EPS = 1 // "within 1 canvas pixel" in normalized units is 2/SIZE

describe('pixel <-> normalized round trip', () => {
  it('round-trips every pixel column within one pixel', () => {
    for (let px = 0; px <= SIZE; px++) {
      const back = normToPixel(pixelToNorm(px, SIZE), SIZE)
      expect(Math.abs(back - px)).toBeLessThanOrEqual(PX_EPS)
    }
  })

  it('round-trips normalized coordinates within one pixel-equivalent', () => {
    for (let i = 0; i <= 40; i++) {
      const x = -1 + (2 * i) / 40
      const back = pixelToNorm(normToPixel(x, SIZE), SIZE)
      expect(Math.abs(back - x)).toBeLessThanOrEqual(2 / SIZE)
    }
  })

  it('boxes survive the round trip', () => {
    const box: NormBox = [-0.5, -0.25, 0.75, 0.5]
    const back = pixelsToBox(boxToPixels(box, SIZE), SIZE)
    for (let j = 0; j < 4; j++) {
      expect(Math.abs(back[j] - box[j])).toBeLessThanOrEqual(2 / SIZE)
    }
  })
})

describe('gesture math', () => {
  it('translates by the exact pixel offset', () => {
    const box: NormBox = [-0.5, -0.5, 0.0, 0.0]
    const moved = translateBox(box, 32, -16, SIZE)
    expect(moved[0]).toBeCloseTo(-0.5 + 0.25, 12)
    expect(moved[1]).toBeCloseTo(-0.5 - 0.125, 12)
    expect(moved[2] - moved[0]).toBeCloseTo(box[2] - box[0], 12)
  })

  it('pixel deltas convert linearly', () => {
    expect(pixelDeltaToNorm(SIZE, SIZE)).toBe(2)
    expect(pixelDeltaToNorm(0, SIZE)).toBe(0)
  })

  it('scales about the center', () => {
    const box: NormBox = [-0.2, -0.4, 0.2, 0.4]
    const scaled = scaleBox(box, 2, 0.5)
    expect(scaled[0]).toBeCloseTo(-0.4, 12)
    expect(scaled[2]).toBeCloseTo(0.4, 12)
    expect(scaled[1]).toBeCloseTo(-0.2, 12)
    expect(scaled[3]).toBeCloseTo(0.2, 12)
    const cx = (scaled[0] + scaled[2]) / 2
    expect(cx).toBeCloseTo(0, 12)
  })

  it('clamps to the normalized frame', () => {
    expect(clampBox([-1.5, 0, 0.5, 2])).toEqual([-1, 0, 0.5, 1])
  })
})
