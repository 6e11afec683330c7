/**
 * Decoder for LMAP label maps: magic "LMAP", version u32, height u32,
 * width u32 (all little-endian), then height*width u16 labels.
 * 0xFFFF marks ignored pixels.
 */

export const IGNORE_LABEL = 0xffff

export interface LabelMap {
  width: number
  height: number
  labels: Uint16Array
}

export function decodeLmap(bytes: Uint8Array): LabelMap {
  if (bytes.length < 16) {
    throw new Error('LMAP shorter than its header')
  }
  const magic = String.fromCharCode(...bytes.subarray(0, 4))
  if (magic !== 'LMAP') {
    throw new Error(`not a label map (magic ${JSON.stringify(magic)})`)
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength)
  const version = view.getUint32(4, true)
  if (version !== 1) {
    throw new Error(`unsupported LMAP version ${version}`)
  }
  const height = view.getUint32(8, true)
  const width = view.getUint32(12, true)
  if (bytes.length !== 16 + height * width * 2) {
    throw new Error(`LMAP payload is ${bytes.length - 16} bytes, expected ${height * width * 2}`)
  }
  const labels = new Uint16Array(height * width)
  for (let i = 0; i < labels.length; i++) {
    labels[i] = view.getUint16(16 + i * 2, true)
  }
  return { width, height, labels }
}
