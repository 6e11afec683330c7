/**
 * Thin typed client over the query-service HTTP API. This is the only
 * place the console talks to the outside world; every similarity value
 * in the UI arrives through these byte streams.
 */

import { decodeBase64, decodePgm, Pgm } from './pgm.js'
import { decodeLmap, LabelMap } from './lmap.js'

export interface Stats {
  min: number
  max: number
  mean: number
}

export interface CellHit {
  key: [number, number, number]
  similarity: number
}

export interface SessionInventory {
  dim: number
  volumes: string[]
  images: string[]
  map_cells: number | null
  bank_entries: number
  mean_ref_entries: number | null
  probe_classes: number | null
  embedder_mode: string
}

export interface ImageQueryResponse {
  kind: 'image'
  stats: Stats
  heatmap: Pgm
}

export interface MapQueryResponse {
  kind: 'map'
  cells: CellHit[]
}

export interface SegmentResponse {
  labels: LabelMap
  legend: string[]
}

/** Service error with the wire-level error name preserved verbatim. */
export class ServiceError extends Error {
  readonly errorName: string

  constructor(errorName: string, detail: string) {
    super(detail ? `${errorName}: ${detail}` : errorName)
    this.errorName = errorName
  }
}

type FetchFn = typeof fetch

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchFn = fetch,
  ) {}

  private async post(path: string, body: unknown): Promise<any> {
    let response: Response
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify(body),
      })
    } catch (err) {
      throw new ServiceError('ServiceUnreachable', String(err))
    }
    const doc = await response.json()
    if (!response.ok) {
      throw new ServiceError(doc.error ?? `HTTP ${response.status}`, doc.detail ?? '')
    }
    return doc
  }

  async session(): Promise<SessionInventory> {
    const response = await this.fetchFn(`${this.baseUrl}/session`)
    if (!response.ok) {
      throw new ServiceError(`HTTP ${response.status}`, 'failed to read session')
    }
    return response.json()
  }

  async query(target: string, prompt: string, topK?: number): Promise<ImageQueryResponse | MapQueryResponse> {
    const doc = await this.post('/query', { target, prompt, top_k: topK ?? null })
    if (doc.results !== undefined) {
      return { kind: 'map', cells: doc.results.map((r: any) => ({ key: r.key, similarity: r.similarity })) }
    }
    return { kind: 'image', stats: doc.stats, heatmap: decodePgm(decodeBase64(doc.pgm_base64)) }
  }

  async segment(image: string, mode: string): Promise<SegmentResponse> {
    const doc = await this.post('/segment', { image, mode })
    return { labels: decodeLmap(decodeBase64(doc.lmap_base64)), legend: doc.legend }
  }

  imageUrl(imageId: string): string {
    return `${this.baseUrl}/image/${encodeURIComponent(imageId)}`
  }
}
