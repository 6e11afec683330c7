/**
 * Console view state and its pure transitions.
 *
 * Queries are tracked by sequence number: a response only lands if no
 * newer request has been issued since (stale replies are dropped), and
 * errors raise a dismissible banner while keeping whatever artifact was
 * on screen. Rendering elsewhere is a pure function of this state, so
 * replaying the same transitions reproduces the same canvas.
 */

import { CellHit, SegmentResponse, Stats } from './api.js'
import { clampThreshold } from './heatmap.js'
import { Pgm } from './pgm.js'

export type DisplayMode = 'heatmap' | 'closed-set' | 'side-by-side'

export interface ViewState {
  target: string | null // image id or the literal "map"
  prompt: string
  stats: Stats | null
  heatmap: Pgm | null
  cells: CellHit[] | null
  segment: SegmentResponse | null
  threshold: number
  displayMode: DisplayMode
  banner: string | null
  history: string[]
  issuedSeq: number
  renderedSeq: number
}

export function initialState(): ViewState {
  return {
    target: null,
    prompt: '',
    stats: null,
    heatmap: null,
    cells: null,
    segment: null,
    threshold: -1,
    displayMode: 'heatmap',
    banner: null,
    history: [],
    issuedSeq: 0,
    renderedSeq: 0,
  }
}

export function selectTarget(state: ViewState, target: string): ViewState {
  // the map target has no closed-set raster to overlay
  const displayMode = target === 'map' && state.displayMode !== 'heatmap' ? 'heatmap' : state.displayMode
  return { ...state, target, displayMode }
}

/** Issue a query: bump the sequence and remember the prompt. */
export function beginQuery(state: ViewState, prompt: string): { state: ViewState; seq: number } {
  const seq = state.issuedSeq + 1
  return { state: { ...state, prompt, issuedSeq: seq }, seq }
}

function isStale(state: ViewState, seq: number): boolean {
  return seq < state.issuedSeq || seq <= state.renderedSeq
}

export function applyImageQuery(state: ViewState, seq: number, stats: Stats, heatmap: Pgm, prompt: string): ViewState {
  if (isStale(state, seq)) return state
  return {
    ...state,
    stats,
    heatmap,
    cells: null,
    banner: null,
    history: [...state.history, prompt],
    renderedSeq: seq,
  }
}

export function applyMapQuery(state: ViewState, seq: number, cells: CellHit[], prompt: string): ViewState {
  if (isStale(state, seq)) return state
  return {
    ...state,
    stats: null,
    cells,
    heatmap: null,
    banner: null,
    history: [...state.history, prompt],
    renderedSeq: seq,
  }
}

/** Errors surface verbatim as a banner; the previous artifact stays up. */
export function applyQueryError(state: ViewState, seq: number, errorName: string): ViewState {
  if (seq < state.issuedSeq) return state
  return { ...state, banner: errorName }
}

export function dismissBanner(state: ViewState): ViewState {
  return { ...state, banner: null }
}

export function applyThreshold(state: ViewState, t: number): ViewState {
  return { ...state, threshold: clampThreshold(t) }
}

export function setDisplayMode(state: ViewState, mode: DisplayMode): ViewState {
  if (state.target === 'map' && mode !== 'heatmap') return state
  return { ...state, displayMode: mode }
}

export function applySegment(state: ViewState, segment: SegmentResponse): ViewState {
  return { ...state, segment }
}
