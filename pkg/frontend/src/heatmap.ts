/**
 * Heatmap colorization: red = high similarity, white = low, following a
 * linear ramp over [threshold, max displayed similarity]. Pixels below
 * the threshold are fully transparent, everything at or above it is
 * opaque, so the threshold slider doubles as the segmentation mask.
 *
 * Pure functions over decoded artifact bytes: the same (pgm, threshold,
 * maxSimilarity) always yields the same RGBA buffer.
 */

import { levelToSimilarity, Pgm } from './pgm.js'

export function clampThreshold(t: number): number {
  if (Number.isNaN(t)) return -1
  return Math.min(1, Math.max(-1, t))
}

/** RGBA buffer for the heatmap overlay. */
export function renderHeatmap(pgm: Pgm, threshold: number, maxSimilarity: number): Uint8ClampedArray {
  const t = clampThreshold(threshold)
  const span = maxSimilarity - t
  const out = new Uint8ClampedArray(pgm.width * pgm.height * 4)
  for (let i = 0; i < pgm.levels.length; i++) {
    const sim = levelToSimilarity(pgm.levels[i])
    const o = i * 4
    if (sim < t) {
      continue // transparent, leave zeros
    }
    const ratio = span > 0 ? Math.min(1, Math.max(0, (sim - t) / span)) : 1
    const cool = Math.round(255 * (1 - ratio))
    out[o] = 255
    out[o + 1] = cool
    out[o + 2] = cool
    out[o + 3] = 255
  }
  return out
}

/** Alpha-blend an overlay onto an opaque base image of the same size. */
export function compositeOver(base: Uint8ClampedArray, overlay: Uint8ClampedArray, opacity = 0.65): Uint8ClampedArray {
  if (base.length !== overlay.length) {
    throw new Error(`base ${base.length} vs overlay ${overlay.length}`)
  }
  const out = new Uint8ClampedArray(base.length)
  for (let o = 0; o < base.length; o += 4) {
    const a = (overlay[o + 3] / 255) * opacity
    out[o] = Math.round(overlay[o] * a + base[o] * (1 - a))
    out[o + 1] = Math.round(overlay[o + 1] * a + base[o + 1] * (1 - a))
    out[o + 2] = Math.round(overlay[o + 2] * a + base[o + 2] * (1 - a))
    out[o + 3] = 255
  }
  return out
}

/** Count of pixels the current threshold keeps opaque. */
export function maskedPixelCount(rgba: Uint8ClampedArray): number {
  let count = 0
  for (let o = 3; o < rgba.length; o += 4) {
    if (rgba[o] > 0) count++
  }
  return count
}
