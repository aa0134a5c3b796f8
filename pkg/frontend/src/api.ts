// Typed client for the session server. Uses only the documented
// endpoints; fetch is available in browsers and node >= 18.

import { consumeStream, Frame } from './streamClient'

export type PairKind = 'soft' | 'rigid'

export type Pair = {
  source_id: number
  target: [number, number, number]
  kind: PairKind
}

export type TransferReport = {
  chamfer: number
  hausdorff: number
  dirichlet: number
  f_d: number
  f_a: number
  q_transfer: number
}

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message)
  }
}

async function jsonOrThrow(resp: Response): Promise<any> {
  const body = await resp.json().catch(() => ({}))
  if (!resp.ok) throw new ApiError(resp.status, body.error ?? resp.statusText)
  return body
}

export class DrapeClient {
  constructor(private baseUrl: string) {}

  async createSession(
    sourceText: string,
    targetText: string,
    config?: Record<string, unknown>,
  ): Promise<string> {
    const body: Record<string, unknown> = { source: sourceText, target: targetText }
    if (config) body.config = config
    const resp = await fetch(`${this.baseUrl}/sessions`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    })
    return (await jsonOrThrow(resp)).id
  }

  async setCorrespondences(
    id: string,
    pairs: Pair[],
  ): Promise<{ status: string; t: number; preview?: number[][] }> {
    const resp = await fetch(`${this.baseUrl}/sessions/${id}/correspondences`, {
      method: 'PUT',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ pairs }),
    })
    return jsonOrThrow(resp)
  }

  async control(
    id: string,
    action: 'start' | 'pause' | 'resume' | 'cancel',
  ): Promise<{ status: string; t: number }> {
    const resp = await fetch(`${this.baseUrl}/sessions/${id}/control`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ action }),
    })
    return jsonOrThrow(resp)
  }

  async status(id: string): Promise<{ status: string; t: number; error?: string }> {
    return jsonOrThrow(await fetch(`${this.baseUrl}/sessions/${id}/status`))
  }

  async result(id: string): Promise<{ status: string; mesh: string; report: TransferReport }> {
    return jsonOrThrow(await fetch(`${this.baseUrl}/sessions/${id}/result`))
  }

  /** Subscribe to the snapshot stream; resolves when the stream ends. */
  async stream(id: string, onFrame: (f: Frame) => void): Promise<void> {
    const resp = await fetch(`${this.baseUrl}/sessions/${id}/stream`)
    if (!resp.ok || !resp.body) throw new ApiError(resp.status, 'stream unavailable')
    await consumeStream(resp.body, onFrame)
  }
}
