/**
 * Deterministic class colors for closed-set overlays, keyed by class
 * index: a fixed 12-entry table, then golden-angle hue rotation for
 * anything beyond it. Ignored pixels render transparent.
 */

import { IGNORE_LABEL, LabelMap } from './lmap.js'

const BASE_COLORS: Array<[number, number, number]> = [
  [230, 25, 75],
  [60, 180, 75],
  [255, 225, 25],
  [0, 130, 200],
  [245, 130, 48],
  [145, 30, 180],
  [70, 240, 240],
  [240, 50, 230],
  [210, 245, 60],
  [250, 190, 190],
  [0, 128, 128],
  [170, 110, 40],
]

export function classColor(index: number): [number, number, number] {
  if (index < BASE_COLORS.length) {
    return BASE_COLORS[index]
  }
  const hue = (index * 137.508) % 360
  return hslToRgb(hue, 0.65, 0.55)
}

function hslToRgb(h: number, s: number, l: number): [number, number, number] {
  const c = (1 - Math.abs(2 * l - 1)) * s
  const x = c * (1 - Math.abs(((h / 60) % 2) - 1))
  const m = l - c / 2
  let rgb: [number, number, number]
  if (h < 60) rgb = [c, x, 0]
  else if (h < 120) rgb = [x, c, 0]
  else if (h < 180) rgb = [0, c, x]
  else if (h < 240) rgb = [0, x, c]
  else if (h < 300) rgb = [x, 0, c]
  else rgb = [c, 0, x]
  return [
    Math.round((rgb[0] + m) * 255),
    Math.round((rgb[1] + m) * 255),
    Math.round((rgb[2] + m) * 255),
  ]
}

/** RGBA buffer for a closed-set overlay. */
export function renderLabels(map: LabelMap): Uint8ClampedArray {
  const out = new Uint8ClampedArray(map.width * map.height * 4)
  for (let i = 0; i < map.labels.length; i++) {
    const label = map.labels[i]
    if (label === IGNORE_LABEL) continue
    const [r, g, b] = classColor(label)
    const o = i * 4
    out[o] = r
    out[o + 1] = g
    out[o + 2] = b
    out[o + 3] = 255
  }
  return out
}
