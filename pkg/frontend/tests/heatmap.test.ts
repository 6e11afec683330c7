import { describe, expect, it } from 'vitest'

import { clampThreshold, compositeOver, maskedPixelCount, renderHeatmap } from '../src/heatmap.js'
import { decodePgm } from '../src/pgm.js'
import { makePgmBytes } from './fixtures.js'

const SIMS = [
  [1.0, 0.5],
  [0.0, -0.5],
]

describe('clampThreshold', () => {
  it('clamps into [-1, 1]', () => {
    expect(clampThreshold(-3)).toBe(-1)
    expect(clampThreshold(1.0001)).toBe(1)
    expect(clampThreshold(0.25)).toBe(0.25)
    expect(clampThreshold(NaN)).toBe(-1)
  })
})

describe('renderHeatmap', () => {
  const pgm = decodePgm(makePgmBytes(SIMS))

  it('paints the maximum pure red and the threshold white', () => {
    const rgba = renderHeatmap(pgm, 0.0, 1.0)
    // pixel 0 sits at the max similarity -> red
    expect([rgba[0], rgba[1], rgba[2], rgba[3]]).toEqual([255, 0, 0, 255])
    // pixel 2 sits exactly at the threshold -> white, still opaque
    const o = 2 * 4
    expect(rgba[o]).toBe(255)
    expect(rgba[o + 1]).toBeGreaterThan(250)
    expect(rgba[o + 3]).toBe(255)
  })

  it('hides pixels below the threshold', () => {
    const rgba = renderHeatmap(pgm, 0.25, 1.0)
    expect(rgba[2 * 4 + 3]).toBe(0) // sim 0.0
    expect(rgba[3 * 4 + 3]).toBe(0) // sim -0.5
    expect(maskedPixelCount(rgba)).toBe(2)
  })

  it('threshold -1 masks every pixel', () => {
    const rgba = renderHeatmap(pgm, -1, 1.0)
    expect(maskedPixelCount(rgba)).toBe(4)
  })

  it('is deterministic for identical inputs', () => {
    const a = renderHeatmap(pgm, 0.1, 0.9)
    const b = renderHeatmap(pgm, 0.1, 0.9)
    expect(Array.from(a)).toEqual(Array.from(b))
  })

  it('degenerate ramp (threshold at max) still renders opaque red', () => {
    const rgba = renderHeatmap(pgm, 1.0, 1.0)
    expect([rgba[0], rgba[1], rgba[2], rgba[3]]).toEqual([255, 0, 0, 255])
    expect(maskedPixelCount(rgba)).toBe(1)
  })
})

describe('compositeOver', () => {
  it('keeps the base where the overlay is transparent', () => {
    const base = new Uint8ClampedArray([10, 20, 30, 255])
    const overlay = new Uint8ClampedArray([255, 0, 0, 0])
    expect(Array.from(compositeOver(base, overlay))).toEqual([10, 20, 30, 255])
  })

  it('blends opaque overlay pixels at the configured opacity', () => {
    const base = new Uint8ClampedArray([0, 0, 0, 255])
    const overlay = new Uint8ClampedArray([255, 255, 255, 255])
    const out = compositeOver(base, overlay, 0.5)
    expect(out[0]).toBe(128)
    expect(out[3]).toBe(255)
  })

  it('rejects size mismatches', () => {
    expect(() => compositeOver(new Uint8ClampedArray(4), new Uint8ClampedArray(8))).toThrow()
  })
})
