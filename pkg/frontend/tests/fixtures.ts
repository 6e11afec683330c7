/** Shared fixture builders: service-shaped artifacts built from known values. */

import { Stats } from '../src/api.js'

/** Encode similarities the way the service does: [-1, 1] -> [0, 255]. */
export function similarityToLevel(sim: number): number {
  const clamped = Math.min(1, Math.max(-1, sim))
  return Math.round((clamped + 1) * 127.5)
}

export function makePgmBytes(similarities: number[][]): Uint8Array {
  const height = similarities.length
  const width = similarities[0].length
  const header = `P5\n${width} ${height}\n255\n`
  const bytes = new Uint8Array(header.length + width * height)
  for (let i = 0; i < header.length; i++) bytes[i] = header.charCodeAt(i)
  let o = header.length
  for (const row of similarities) {
    for (const sim of row) {
      bytes[o++] = similarityToLevel(sim)
    }
  }
  return bytes
}

export function statsOf(similarities: number[][]): Stats {
  const flat = similarities.flat()
  return {
    min: Math.min(...flat),
    max: Math.max(...flat),
    mean: flat.reduce((a, b) => a + b, 0) / flat.length,
  }
}

export function makeLmapBytes(labels: number[][], ignore: Array<[number, number]> = []): Uint8Array {
  const height = labels.length
  const width = labels[0].length
  const bytes = new Uint8Array(16 + width * height * 2)
  const view = new DataView(bytes.buffer)
  bytes.set([0x4c, 0x4d, 0x41, 0x50]) // "LMAP"
  view.setUint32(4, 1, true)
  view.setUint32(8, height, true)
  view.setUint32(12, width, true)
  for (let r = 0; r < height; r++) {
    for (let c = 0; c < width; c++) {
      const isIgnore = ignore.some(([ir, ic]) => ir === r && ic === c)
      view.setUint16(16 + (r * width + c) * 2, isIgnore ? 0xffff : labels[r][c], true)
    }
  }
  return bytes
}

export function b64(bytes: Uint8Array): string {
  let binary = ''
  for (const byte of bytes) binary += String.fromCharCode(byte)
  return btoa(binary)
}

export type RouteTable = Record<string, (body: any) => { status: number; json: unknown }>

/** fetch stub answering from a route table keyed by "METHOD path". */
export function stubFetch(routes: RouteTable): typeof fetch {
  return (async (input: any, init?: any) => {
    const url = typeof input === 'string' ? input : input.url
    const method = init?.method ?? 'GET'
    const path = url.replace(/^https?:\/\/[^/]+/, '')
    const handler = routes[`${method} ${path}`]
    if (!handler) {
      throw new TypeError(`no stub route for ${method} ${path}`)
    }
    const body = init?.body ? JSON.parse(init.body) : undefined
    const reply = handler(body)
    return {
      ok: reply.status >= 200 && reply.status < 300,
      status: reply.status,
      json: async () => reply.json,
    } as Response
  }) as typeof fetch
}
