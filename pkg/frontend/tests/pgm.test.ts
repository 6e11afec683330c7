import { describe, expect, it } from 'vitest'

import { decodeBase64, decodePgm, levelToSimilarity, similarityRange } from '../src/pgm.js'
import { b64, makePgmBytes } from './fixtures.js'

describe('decodePgm', () => {
  it('decodes dimensions and levels', () => {
    const pgm = decodePgm(makePgmBytes([[1, 0], [-1, 0.5]]))
    expect(pgm.width).toBe(2)
    expect(pgm.height).toBe(2)
    expect(Array.from(pgm.levels)).toEqual([255, 128, 0, 191])
  })

  it('round-trips through base64', () => {
    const bytes = makePgmBytes([[0.25, -0.75]])
    const pgm = decodePgm(decodeBase64(b64(bytes)))
    expect(pgm.width).toBe(2)
    expect(pgm.levels[0]).toBe(159)
  })

  it('rejects a bad magic', () => {
    const bytes = makePgmBytes([[0]])
    bytes[1] = '6'.charCodeAt(0)
    expect(() => decodePgm(bytes)).toThrow(/not a binary PGM/)
  })

  it('rejects a short payload', () => {
    const bytes = makePgmBytes([[0, 0], [0, 0]])
    expect(() => decodePgm(bytes.subarray(0, bytes.length - 1))).toThrow(/payload/)
  })
})

describe('levelToSimilarity', () => {
  it('maps the 8-bit range back onto [-1, 1]', () => {
    expect(levelToSimilarity(0)).toBe(-1)
    expect(levelToSimilarity(255)).toBe(1)
    expect(levelToSimilarity(128)).toBeCloseTo(0, 2)
  })

  it('similarityRange finds the extremes', () => {
    const pgm = decodePgm(makePgmBytes([[0.9, -0.4, 0.1]]))
    const range = similarityRange(pgm)
    expect(range.min).toBeCloseTo(-0.4, 2)
    expect(range.max).toBeCloseTo(0.9, 2)
  })
})
