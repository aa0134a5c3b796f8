// Single-page UI state: geometry, pair list, session id, live mesh
// buffer, loss chart. Pure update functions so the event wiring stays
// trivial and the logic is testable headless.

import { Geometry, vertexCount } from './objFormat'
import { Pair, PairKind, TransferReport } from './api'
import { Frame } from './streamClient'

export type ChartPoint = { t: number; loss: number; kind: string }

export type ViewState = {
  source: Geometry | null
  target: Geometry | null
  sessionId: string | null
  status: string
  pairs: Pair[]
  // mirrors the server's acknowledged pair list; compare to `pairs` to
  // know whether a commit is pending
  committedPairs: Pair[]
  previewVertices: Float64Array | null
  liveVertices: Float32Array | null
  liveT: number
  chart: ChartPoint[]
  report: TransferReport | null
  lastError: string | null
}

export function initialState(): ViewState {
  return {
    source: null,
    target: null,
    sessionId: null,
    status: 'idle',
    pairs: [],
    committedPairs: [],
    previewVertices: null,
    liveVertices: null,
    liveT: -1,
    chart: [],
    report: null,
    lastError: null,
  }
}

export function loadGeometry(s: ViewState, source: Geometry, target: Geometry): ViewState {
  return { ...initialState(), source, target }
}

export function addPair(
  s: ViewState,
  sourceId: number,
  target: [number, number, number],
  kind: PairKind = 'soft',
): ViewState {
  if (!s.source || sourceId < 0 || sourceId >= vertexCount(s.source)) {
    return { ...s, lastError: `invalid source vertex ${sourceId}` }
  }
  if (s.pairs.some((p) => p.source_id === sourceId)) {
    return { ...s, lastError: `vertex ${sourceId} already paired` }
  }
  return { ...s, pairs: [...s.pairs, { source_id: sourceId, target, kind }], lastError: null }
}

export function removePair(s: ViewState, sourceId: number): ViewState {
  return { ...s, pairs: s.pairs.filter((p) => p.source_id !== sourceId) }
}

export function movePairTarget(
  s: ViewState,
  sourceId: number,
  target: [number, number, number],
): ViewState {
  return {
    ...s,
    pairs: s.pairs.map((p) => (p.source_id === sourceId ? { ...p, target } : p)),
  }
}

export function setRigid(s: ViewState, sourceId: number, rigid: boolean): ViewState {
  return {
    ...s,
    pairs: s.pairs.map((p) =>
      p.source_id === sourceId ? { ...p, kind: rigid ? 'rigid' : 'soft' } : p,
    ),
  }
}

export function hasUncommittedEdits(s: ViewState): boolean {
  return JSON.stringify(s.pairs) !== JSON.stringify(s.committedPairs)
}

/** Apply a successful set_correspondences acknowledgment. */
export function applyCommit(
  s: ViewState,
  ack: { status: string; preview?: number[][] },
): ViewState {
  return {
    ...s,
    status: ack.status,
    committedPairs: s.pairs.map((p) => ({ ...p })),
    previewVertices: ack.preview ? Float64Array.from(ack.preview.flat()) : s.previewVertices,
    lastError: null,
  }
}

/** Apply one streamed snapshot frame in order; out-of-order frames are
 * dropped (the server guarantees ordering per subscription). */
export function applyFrame(s: ViewState, frame: Frame): ViewState {
  const h = frame.header
  if (h.error) return { ...s, status: 'failed', lastError: h.error }
  const t = h.t ?? -1
  if (t <= s.liveT && !h.done) return s
  const next: ViewState = {
    ...s,
    liveVertices: frame.vertices,
    liveT: t,
    status: h.done ? 'done' : s.status,
    report: h.report ? (h.report as unknown as TransferReport) : s.report,
  }
  if (h.loss !== null && h.loss !== undefined) {
    next.chart = [...s.chart, { t, loss: h.loss, kind: h.kind ?? '' }]
  }
  return next
}

/** Pair dot colors follow the rigid flag; one hue per pair index for the
 * synchronized source/target highlighting. */
export function pairColor(index: number, kind: PairKind): string {
  if (kind === 'rigid') return '#e63946'
  const hue = (index * 47) % 360
  return `hsl(${hue}, 70%, 55%)`
}
