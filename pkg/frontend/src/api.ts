/** Thin REST client over fetch plus the canonical JSON form used by the
 * contract suite (stable key order at every depth). */

import type {
  AnnotationAck,
  AnnotationPayload,
  CategoriesPayload,
  CoveragePayload,
  ExemplarAck,
  ExemplarPayload,
  QueuePayload,
  TallyPayload,
  VoteAck,
  VotePayload,
} from './types.js'

export function canonicalJson(value: unknown): string {
  if (Array.isArray(value)) {
    return '[' + value.map(canonicalJson).join(',') + ']'
  }
  if (value !== null && typeof value === 'object') {
    const entries = Object.entries(value as Record<string, unknown>)
      .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
      .map(([k, v]) => JSON.stringify(k) + ':' + canonicalJson(v))
    return '{' + entries.join(',') + '}'
  }
  return JSON.stringify(value)
}

export class ApiError extends Error {
  readonly status: number
  readonly detail: unknown

  constructor(status: number, detail: unknown) {
    super(`service replied ${status}`)
    this.status = status
    this.detail = detail
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(base + path, {
    headers: { 'Content-Type': 'application/json' },
    ...init,
  })
  const body = await resp.json()
  if (!resp.ok) throw new ApiError(resp.status, body)
  return body as T
}

export class AnnotationApi {
  readonly base: string

  constructor(base = '') {
    this.base = base
  }

  categories(): Promise<CategoriesPayload> {
    return request(this.base, '/categories')
  }

  queue(annotator: string): Promise<QueuePayload> {
    return request(this.base, `/queue?annotator=${encodeURIComponent(annotator)}`)
  }

  submitAnnotation(payload: AnnotationPayload): Promise<AnnotationAck> {
    return request(this.base, '/annotations', { method: 'POST', body: JSON.stringify(payload) })
  }

  submitExemplar(payload: ExemplarPayload): Promise<ExemplarAck> {
    return request(this.base, '/exemplars', { method: 'POST', body: JSON.stringify(payload) })
  }

  coverage(): Promise<CoveragePayload> {
    return request(this.base, '/coverage')
  }

  castVote(payload: VotePayload): Promise<VoteAck> {
    return request(this.base, '/2afc/votes', { method: 'POST', body: JSON.stringify(payload) })
  }

  tally(preferred: 'A' | 'B'): Promise<TallyPayload> {
    return request(this.base, `/2afc/tally?preferred=${preferred}`)
  }
}
