/**
 * Decoder for the binary PGM (P5) heatmaps the service ships.
 *
 * Levels are 8-bit and encode similarity linearly: 0 -> -1, 255 -> +1.
 * No math beyond the fixed level<->similarity mapping happens here; the
 * similarities themselves always originate from service bytes.
 */

export interface Pgm {
  width: number
  height: number
  levels: Uint8Array
}

export function decodeBase64(b64: string): Uint8Array {
  const binary = atob(b64)
  const bytes = new Uint8Array(binary.length)
  for (let i = 0; i < binary.length; i++) {
    bytes[i] = binary.charCodeAt(i)
  }
  return bytes
}

export function decodePgm(bytes: Uint8Array): Pgm {
  // header: "P5\n<width> <height>\n<maxval>\n" followed by raw levels
  let pos = 0
  const readToken = (): string => {
    while (pos < bytes.length && isWhitespace(bytes[pos])) pos++
    const start = pos
    while (pos < bytes.length && !isWhitespace(bytes[pos])) pos++
    return String.fromCharCode(...bytes.subarray(start, pos))
  }
  const magic = readToken()
  if (magic !== 'P5') {
    throw new Error(`not a binary PGM (magic ${JSON.stringify(magic)})`)
  }
  const width = parseInt(readToken(), 10)
  const height = parseInt(readToken(), 10)
  const maxval = parseInt(readToken(), 10)
  if (!(width > 0) || !(height > 0)) {
    throw new Error(`bad PGM dimensions ${width}x${height}`)
  }
  if (maxval !== 255) {
    throw new Error(`expected 8-bit PGM, got maxval ${maxval}`)
  }
  pos++ // single whitespace byte after maxval
  const levels = bytes.subarray(pos)
  if (levels.length !== width * height) {
    throw new Error(`PGM payload is ${levels.length} bytes, expected ${width * height}`)
  }
  return { width, height, levels: new Uint8Array(levels) }
}

function isWhitespace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d
}

/** Similarity encoded by one 8-bit level. */
export function levelToSimilarity(level: number): number {
  return level / 127.5 - 1
}

/** Smallest/largest similarity present in a decoded heatmap. */
export function similarityRange(pgm: Pgm): { min: number; max: number } {
  let lo = 255
  let hi = 0
  for (const level of pgm.levels) {
    if (level < lo) lo = level
    if (level > hi) hi = level
  }
  return { min: levelToSimilarity(lo), max: levelToSimilarity(hi) }
}
