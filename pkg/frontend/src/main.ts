// Event wiring for the single-page client. State transitions live in
// state.ts, picking math in picking.ts, rendering in viewer.ts.

import { DrapeClient, Pair } from './api'
import { parseGeometry, serializeGeometry, vertex, Geometry } from './objFormat'
import {
  pickCloudPoint,
  pickSurfacePoint,
  pickVertex,
  rayFromNdc,
} from './picking'
import {
  ViewState,
  addPair,
  applyCommit,
  applyFrame,
  hasUncommittedEdits,
  initialState,
  loadGeometry,
  movePairTarget,
  setRigid,
} from './state'
import {
  createViewport,
  describeCamera,
  ndcFromMouse,
  renderLoop,
  showGeometry,
  showPairDots,
  updateVertices,
} from './viewer'

const $ = (id: string) => document.getElementById(id) as HTMLElement

let state: ViewState = initialState()
const client = new DrapeClient(location.origin.replace(/:\d+$/, ':8000'))

const sourceView = createViewport($('source-view'))
const targetView = createViewport($('target-view'))
renderLoop([sourceView, targetView])

let selectedSourceId: number | null = null
let draggingPair: number | null = null

function setState(next: ViewState) {
  state = next
  $('status-line').textContent =
    `${state.status}` +
    (state.liveT >= 0 ? ` t=${state.liveT}` : '') +
    (state.lastError ? ` — ${state.lastError}` : '')
  redrawDots()
  redrawChart()
  redrawReport()
}

function redrawDots() {
  if (!state.source || !state.target) return
  const src = state.source
  showPairDots(sourceView, state.pairs, (p) => vertex(src, p.source_id))
  showPairDots(targetView, state.pairs, (p) => p.target)
}

function redrawChart() {
  const canvas = $('loss-chart') as HTMLCanvasElement
  const ctx = canvas.getContext('2d')
  if (!ctx || !state.chart.length) return
  ctx.clearRect(0, 0, canvas.width, canvas.height)
  const losses = state.chart.map((c) => Math.log10(Math.max(c.loss, 1e-12)))
  const lo = Math.min(...losses)
  const hi = Math.max(...losses)
  ctx.strokeStyle = '#7fb3ff'
  ctx.beginPath()
  state.chart.forEach((c, i) => {
    const x = (i / Math.max(1, state.chart.length - 1)) * canvas.width
    const y = canvas.height - ((losses[i] - lo) / Math.max(1e-9, hi - lo)) * canvas.height
    i ? ctx.lineTo(x, y) : ctx.moveTo(x, y)
  })
  ctx.stroke()
}

function redrawReport() {
  const r = state.report
  $('report-panel').textContent = r
    ? `chamfer ${r.chamfer.toExponential(3)}  hausdorff ${r.hausdorff.toExponential(3)}  ` +
      `dirichlet ${r.dirichlet.toExponential(3)}  Q ${r.q_transfer.toFixed(4)}`
    : ''
}

// -- picking ---------------------------------------------------------------

$('source-view').addEventListener('click', (ev) => {
  if (!state.source) return
  const [nx, ny] = ndcFromMouse($('source-view'), ev as MouseEvent)
  const id = pickVertex(rayFromNdc(describeCamera(sourceView), nx, ny), state.source)
  if (id === null) return // miss: no-op
  selectedSourceId = id
  $('status-line').textContent = `source vertex ${id} selected — click the target`
})

$('target-view').addEventListener('click', (ev) => {
  if (!state.target) return
  const [nx, ny] = ndcFromMouse($('target-view'), ev as MouseEvent)
  const ray = rayFromNdc(describeCamera(targetView), nx, ny)
  const point = state.target.faces.length
    ? pickSurfacePoint(ray, state.target)
    : idToPoint(pickCloudPoint(ray, state.target, 0.02), state.target)
  if (!point) return
  if (draggingPair !== null) {
    setState(movePairTarget(state, draggingPair, point))
    draggingPair = null
  } else if (selectedSourceId !== null) {
    const rigid = ($('rigid-toggle') as HTMLInputElement).checked
    setState(addPair(state, selectedSourceId, point, rigid ? 'rigid' : 'soft'))
    selectedSourceId = null
  }
})

function idToPoint(id: number | null, g: Geometry): [number, number, number] | null {
  return id === null ? null : vertex(g, id)
}

// -- controls --------------------------------------------------------------

$('load-btn').addEventListener('click', async () => {
  const sourceText = ($('source-text') as HTMLTextAreaElement).value
  const targetText = ($('target-text') as HTMLTextAreaElement).value
  const source = parseGeometry(sourceText)
  const target = parseGeometry(targetText)
  const id = await client.createSession(sourceText, targetText)
  setState({ ...loadGeometry(state, source, target), sessionId: id })
  showGeometry(sourceView, source)
  showGeometry(targetView, target)
})

$('commit-btn').addEventListener('click', async () => {
  if (!state.sessionId) return
  try {
    const ack = await client.setCorrespondences(state.sessionId, state.pairs)
    setState(applyCommit(state, ack))
    if (state.previewVertices) updateVertices(sourceView, state.previewVertices)
  } catch (err) {
    setState({ ...state, lastError: String(err) })
  }
})

for (const action of ['start', 'pause', 'resume', 'cancel'] as const) {
  $(`${action}-btn`).addEventListener('click', async () => {
    if (!state.sessionId) return
    if (action === 'resume' && hasUncommittedEdits(state)) {
      const ack = await client.setCorrespondences(state.sessionId, state.pairs)
      setState(applyCommit(state, ack))
    }
    const st = await client.control(state.sessionId, action)
    setState({ ...state, status: st.status })
    if (action === 'start') subscribe()
  })
}

function subscribe() {
  if (!state.sessionId) return
  client
    .stream(state.sessionId, (frame) => {
      setState(applyFrame(state, frame))
      if (state.liveVertices) updateVertices(sourceView, state.liveVertices)
    })
    .catch(() => {
      // stream drop: reconnect; the server replays from the start and
      // applyFrame discards already-seen t values
      if (state.status === 'running') subscribe()
    })
}

$('download-btn').addEventListener('click', async () => {
  if (!state.sessionId) return
  const res = await client.result(state.sessionId)
  const blob = new Blob([res.mesh], { type: 'text/plain' })
  const a = document.createElement('a')
  a.href = URL.createObjectURL(blob)
  a.download = 'draped.obj'
  a.click()
})

$('pair-list').addEventListener('click', (ev) => {
  const el = ev.target as HTMLElement
  const id = Number(el.dataset.pairId)
  if (el.dataset.action === 'drag') draggingPair = id
  if (el.dataset.action === 'rigid') setState(setRigid(state, id, el.dataset.value === 'on'))
})

export { state, setState, serializeGeometry }
