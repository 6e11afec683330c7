import { describe, expect, it } from 'vitest'

import { decodePgm } from '../src/pgm.js'
import {
  applyImageQuery,
  applyQueryError,
  applyThreshold,
  beginQuery,
  dismissBanner,
  initialState,
  selectTarget,
  setDisplayMode,
} from '../src/state.js'
import { makePgmBytes, statsOf } from './fixtures.js'

const SIMS = [[0.5, -0.5]]
const PGM = decodePgm(makePgmBytes(SIMS))
const STATS = statsOf(SIMS)

describe('query sequencing', () => {
  it('applies a fresh response and records history', () => {
    let state = selectTarget(initialState(), 'img1')
    const begun = beginQuery(state, 'chair')
    state = applyImageQuery(begun.state, begun.seq, STATS, PGM, 'chair')
    expect(state.stats).toEqual(STATS)
    expect(state.heatmap).toBe(PGM)
    expect(state.history).toEqual(['chair'])
    expect(state.banner).toBeNull()
  })

  it('drops a stale response superseded by a newer request', () => {
    let state = selectTarget(initialState(), 'img1')
    const first = beginQuery(state, 'chair')
    const second = beginQuery(first.state, 'table')
    state = applyImageQuery(second.state, second.seq, STATS, PGM, 'table')
    const afterStale = applyImageQuery(state, first.seq, statsOf([[0]]), PGM, 'chair')
    expect(afterStale).toBe(state)
    expect(afterStale.history).toEqual(['table'])
  })

  it('two successive prompts replace the artifact and extend history', () => {
    let state = selectTarget(initialState(), 'img1')
    const first = beginQuery(state, 'chair')
    state = applyImageQuery(first.state, first.seq, STATS, PGM, 'chair')
    const second = beginQuery(state, 'plant')
    const otherPgm = decodePgm(makePgmBytes([[0.9, 0.9]]))
    state = applyImageQuery(second.state, second.seq, statsOf([[0.9, 0.9]]), otherPgm, 'plant')
    expect(state.heatmap).toBe(otherPgm)
    expect(state.history).toEqual(['chair', 'plant'])
  })
})

describe('error handling', () => {
  it('sets a banner and keeps the previous artifact', () => {
    let state = selectTarget(initialState(), 'img1')
    const ok = beginQuery(state, 'chair')
    state = applyImageQuery(ok.state, ok.seq, STATS, PGM, 'chair')
    const failed = beginQuery(state, 'zeppelin')
    state = applyQueryError(failed.state, failed.seq, 'NoEmbedderConfigured')
    expect(state.banner).toBe('NoEmbedderConfigured')
    expect(state.heatmap).toBe(PGM)
    expect(state.stats).toEqual(STATS)
  })

  it('banner dismisses without touching artifacts', () => {
    let state = selectTarget(initialState(), 'img1')
    const begun = beginQuery(state, 'chair')
    state = applyImageQuery(begun.state, begun.seq, STATS, PGM, 'chair')
    state = dismissBanner(applyQueryError(state, state.issuedSeq, 'boom'))
    expect(state.banner).toBeNull()
    expect(state.heatmap).toBe(PGM)
  })
})

describe('threshold and modes', () => {
  it('clamps the threshold', () => {
    const state = applyThreshold(initialState(), 7)
    expect(state.threshold).toBe(1)
    expect(applyThreshold(state, -7).threshold).toBe(-1)
  })

  it('threshold moves are reversible (pure function of state)', () => {
    const start = applyThreshold(initialState(), 0.3)
    const wiggled = applyThreshold(applyThreshold(start, 0.9), 0.3)
    expect(wiggled.threshold).toBe(start.threshold)
  })

  it('the map target has no closed-set raster mode', () => {
    let state = selectTarget(initialState(), 'map')
    state = setDisplayMode(state, 'closed-set')
    expect(state.displayMode).toBe('heatmap')
    state = selectTarget(state, 'img1')
    expect(setDisplayMode(state, 'closed-set').displayMode).toBe('closed-set')
  })

  it('switching to the map target resets a raster-only display mode', () => {
    let state = selectTarget(initialState(), 'img1')
    state = setDisplayMode(state, 'side-by-side')
    state = selectTarget(state, 'map')
    expect(state.displayMode).toBe('heatmap')
  })
})
