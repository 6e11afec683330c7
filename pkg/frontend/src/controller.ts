/**
 * The operator loop, DOM-free: issue a prompt query against the current
 * target and fold the service reply (or error) into the view state.
 *
 * Issue/fold are separate steps so the caller can commit the sequence
 * bump synchronously, await the network, and then fold the outcome into
 * whatever the state has become; replies superseded by a newer request
 * are dropped inside the apply functions. submitPrompt bundles the
 * whole exchange for the sequential case.
 */

import { ApiClient, ServiceError } from './api.js'
import { CellHit, Stats } from './api.js'
import { Pgm } from './pgm.js'
import {
  ViewState,
  applyImageQuery,
  applyMapQuery,
  applyQueryError,
  beginQuery,
} from './state.js'

export type QueryOutcome =
  | { kind: 'image'; stats: Stats; heatmap: Pgm }
  | { kind: 'map'; cells: CellHit[] }
  | { kind: 'error'; name: string }

export async function runQuery(api: ApiClient, target: string, prompt: string): Promise<QueryOutcome> {
  try {
    const response = await api.query(target, prompt)
    return response.kind === 'map'
      ? { kind: 'map', cells: response.cells }
      : { kind: 'image', stats: response.stats, heatmap: response.heatmap }
  } catch (err) {
    return { kind: 'error', name: err instanceof ServiceError ? err.errorName : String(err) }
  }
}

export function foldQueryOutcome(state: ViewState, seq: number, prompt: string, outcome: QueryOutcome): ViewState {
  switch (outcome.kind) {
    case 'image':
      return applyImageQuery(state, seq, outcome.stats, outcome.heatmap, prompt)
    case 'map':
      return applyMapQuery(state, seq, outcome.cells, prompt)
    case 'error':
      return applyQueryError(state, seq, outcome.name)
  }
}

export async function submitPrompt(state: ViewState, api: ApiClient, prompt: string): Promise<ViewState> {
  const target = state.target
  if (!prompt || !target) return state
  const begun = beginQuery(state, prompt)
  const outcome = await runQuery(api, target, prompt)
  return foldQueryOutcome(begun.state, begun.seq, prompt, outcome)
}
