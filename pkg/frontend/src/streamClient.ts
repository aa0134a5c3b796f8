// Incremental decoder for the snapshot stream: each frame is one JSON
// header line followed by header.count * 12 bytes of little-endian
// float32 vertex triples.

export type FrameHeader = {
  t?: number
  loss?: number | null
  kind?: string | null
  done?: boolean
  count: number
  report?: Record<string, number>
  error?: string
}

export type Frame = { header: FrameHeader; vertices: Float32Array }

export class StreamDecoder {
  private buf = new Uint8Array(0)

  /** Feed a chunk, get back every complete frame it finished. */
  push(chunk: Uint8Array): Frame[] {
    const merged = new Uint8Array(this.buf.length + chunk.length)
    merged.set(this.buf)
    merged.set(chunk, this.buf.length)
    this.buf = merged
    const frames: Frame[] = []
    for (;;) {
      const nl = this.buf.indexOf(0x0a)
      if (nl < 0) break
      const header = JSON.parse(new TextDecoder().decode(this.buf.subarray(0, nl))) as FrameHeader
      const need = nl + 1 + header.count * 12
      if (this.buf.length < need) break
      const payload = this.buf.slice(nl + 1, need)
      this.buf = this.buf.slice(need)
      frames.push({
        header,
        vertices: new Float32Array(payload.buffer, 0, header.count * 3),
      })
    }
    return frames
  }

  get pending(): number {
    return this.buf.length
  }
}

/** Read a whole response body through the decoder. onFrame is invoked in
 * stream order; resolves when the stream ends. */
export async function consumeStream(
  body: ReadableStream<Uint8Array>,
  onFrame: (f: Frame) => void,
): Promise<void> {
  const decoder = new StreamDecoder()
  const reader = body.getReader()
  for (;;) {
    const { done, value } = await reader.read()
    if (value) for (const f of decoder.push(value)) onFrame(f)
    if (done) return
  }
}
