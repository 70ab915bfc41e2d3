/** Browser entry: binds sessions and renderers to the DOM against the live
 * service. All rules live in state.ts/views.ts; this file only wires events. */

import { AnnotationApi, ApiError } from './api.js'
import { AnnotationSession, CoverageModel, ExemplarDraft, TwoAfcSession } from './state.js'
import { render2afcView, renderAnnotationView, renderCoverageDashboard } from './views.js'
import type { TallyPayload } from './types.js'

const api = new AnnotationApi('')
const params = new URLSearchParams(window.location.search)
const annotatorId = params.get('annotator') ?? 'expert-1'

const app = document.querySelector<HTMLElement>('#app')
if (!app) throw new Error('missing #app container')
const root: HTMLElement = app

let palette: string[] = []
const session = new AnnotationSession(annotatorId)
const afc = new TwoAfcSession(annotatorId)
const coverage = new CoverageModel()
let tally: TallyPayload | null = null

function show(html: string): void {
  root.innerHTML = html
}

async function refreshQueue(): Promise<void> {
  const payload = await api.queue(annotatorId)
  session.queue = payload.items
  session.cursor = 0
}

function drawAnnotation(): void {
  const item = session.current()
  if (!item) {
    show('<p class="done">queue drained: nothing left to annotate</p>')
    return
  }
  show(renderAnnotationView(item, palette, session))
  const img = root.querySelector<HTMLImageElement>('#review-image')
  const skip = root.querySelector<HTMLButtonElement>('#skip-report')
  if (img && skip) {
    img.onerror = () => { skip.hidden = false }
    skip.onclick = () => { session.skipAndReport('image failed to load'); drawAnnotation() }
  }
  root.querySelectorAll<HTMLButtonElement>('.cat-toggle').forEach((button) => {
    button.onclick = () => {
      session.toggleCategory(button.dataset.category ?? '')
      drawAnnotation()
    }
  })
  root.querySelectorAll<HTMLInputElement>('input[name=verdict]').forEach((radio) => {
    radio.onchange = () => { session.setVerdict(radio.value as 'fake' | 'real'); drawAnnotation() }
  })
  const notes = root.querySelector<HTMLTextAreaElement>('#notes')
  if (notes) notes.oninput = () => session.setNotes(notes.value)
  const submit = root.querySelector<HTMLButtonElement>('#submit-annotation')
  if (submit) {
    submit.onclick = async () => {
      try {
        await api.submitAnnotation(session.buildPayload(palette, new Date().toISOString()))
        session.advance()
        drawAnnotation()
      } catch (err) {
        if (err instanceof ApiError) alert(`rejected: ${JSON.stringify(err.detail)}`)
        else throw err
      }
    }
  }
}

async function drawCoverage(): Promise<void> {
  try {
    coverage.applyPayload(await api.coverage())
  } catch {
    coverage.markUnreachable()
  }
  show(renderCoverageDashboard(coverage))
}

async function draw2afc(itemId: string): Promise<void> {
  show(render2afcView(itemId, 'candidate A', 'candidate B', afc, tally))
  root.querySelectorAll<HTMLButtonElement>('.afc-choice').forEach((button) => {
    button.onclick = async () => {
      const choice = button.dataset.choice as 'A' | 'B'
      const payload = afc.buildVote(itemId, choice)
      if (!payload) return
      const ack = await api.castVote(payload) // 'duplicate' surfaces idempotently
      afc.recordAck(itemId, choice)
      tally = await api.tally('A')
      void ack
      void draw2afc(itemId)
    }
  })
}

document.addEventListener('keydown', (event) => {
  if ((event.target as HTMLElement)?.tagName === 'TEXTAREA') return
  if (session.handleShortcut(event.key, palette)) {
    event.preventDefault()
    drawAnnotation()
  }
})

document.querySelectorAll<HTMLButtonElement>('nav button').forEach((button) => {
  button.onclick = () => {
    const view = button.dataset.view
    if (view === 'annotate') drawAnnotation()
    else if (view === 'coverage') void drawCoverage()
    else if (view === '2afc') void draw2afc(params.get('pair') ?? 'pair-0001')
  }
})

async function boot(): Promise<void> {
  palette = (await api.categories()).categories
  await refreshQueue()
  drawAnnotation()
}

void boot()
