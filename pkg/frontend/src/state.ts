/** Pure session state: drafts, submit gating, payload building, vote tracking.
 *
 * Everything here is DOM-free so the rules are testable in node. Payload
 * builders fix the key order and sort category lists into palette order; the
 * contract suite holds their output against recorded service fixtures.
 */

import type {
  AnnotationPayload,
  Choice,
  CoveragePayload,
  ExemplarPayload,
  Polarity,
  QueueItem,
  Verdict,
  VotePayload,
} from './types.js'

export const COVERAGE_REQUIRED = 3

/** Keyboard shortcuts: 16 category toggles plus f/r verdicts. */
export const CATEGORY_KEYS = ['1', '2', '3', '4', '5', '6', '7', '8',
  '9', '0', 'q', 'w', 'e', 't', 'y', 'u'] as const

export function paletteOrder(categories: Iterable<string>, palette: string[]): string[] {
  const index = new Map(palette.map((c, i) => [c, i]))
  return [...categories].sort((a, b) => (index.get(a) ?? 99) - (index.get(b) ?? 99))
}

// ── annotation session ──

export class AnnotationSession {
  readonly annotatorId: string
  queue: QueueItem[] = []
  cursor = 0
  verdict: Verdict | null = null
  categories = new Set<string>()
  notes = ''
  skipped: { image_id: string; reason: string }[] = []

  constructor(annotatorId: string) {
    this.annotatorId = annotatorId
  }

  current(): QueueItem | null {
    return this.queue[this.cursor] ?? null
  }

  setVerdict(v: Verdict): void {
    this.verdict = v
  }

  toggleCategory(category: string): void {
    if (this.categories.has(category)) this.categories.delete(category)
    else this.categories.add(category)
  }

  setNotes(text: string): void {
    this.notes = text
  }

  /** Submit stays disabled until a verdict is chosen and >=1 category is on. */
  canSubmit(): boolean {
    return this.verdict !== null && this.categories.size >= 1
  }

  blockReason(): string | null {
    if (this.verdict === null) return 'choose a verdict first'
    if (this.categories.size === 0) return 'select at least one supporting category'
    return null
  }

  buildPayload(palette: string[], timestamp: string | null = null): AnnotationPayload {
    const item = this.current()
    if (!item || !this.canSubmit() || this.verdict === null) {
      throw new Error('draft incomplete: ' + (this.blockReason() ?? 'no image on queue'))
    }
    return {
      image_id: item.image_id,
      annotator_id: this.annotatorId,
      verdict: this.verdict,
      categories: paletteOrder(this.categories, palette),
      notes: this.notes.trim() === '' ? null : this.notes,
      timestamp,
    }
  }

  resetDraft(): void {
    this.verdict = null
    this.categories = new Set()
    this.notes = ''
  }

  advance(): void {
    this.cursor += 1
    this.resetDraft()
  }

  /** Image failed to load: record and move on without submitting. */
  skipAndReport(reason: string): void {
    const item = this.current()
    if (item) this.skipped.push({ image_id: item.image_id, reason })
    this.advance()
  }

  handleShortcut(key: string, palette: string[]): boolean {
    if (key === 'f') { this.setVerdict('fake'); return true }
    if (key === 'r') { this.setVerdict('real'); return true }
    const slot = (CATEGORY_KEYS as readonly string[]).indexOf(key)
    const category = slot >= 0 ? palette[slot] : undefined
    if (category !== undefined) { this.toggleCategory(category); return true }
    return false
  }
}

// ── exemplar draft ──

export class ExemplarDraft {
  imageId: string
  polarity: Polarity = 'positive'
  reasoningText = ''
  covered = new Set<string>()

  constructor(imageId: string) {
    this.imageId = imageId
  }

  /** Submit stays disabled until text and covered set are both non-empty. */
  canSubmit(): boolean {
    return this.reasoningText.trim().length > 0 && this.covered.size >= 1
  }

  blockReason(): string | null {
    if (this.reasoningText.trim().length === 0) return 'write the reasoning text'
    if (this.covered.size === 0) return 'declare at least one covered category'
    return null
  }

  toggleCovered(category: string): void {
    if (this.covered.has(category)) this.covered.delete(category)
    else this.covered.add(category)
  }

  buildPayload(palette: string[]): ExemplarPayload {
    if (!this.canSubmit()) throw new Error('draft incomplete: ' + this.blockReason())
    return {
      image_id: this.imageId,
      polarity: this.polarity,
      reasoning_text: this.reasoningText,
      covered: paletteOrder(this.covered, palette),
    }
  }
}

// ── 2AFC voting ──

export class TwoAfcSession {
  readonly raterId: string
  private voted = new Map<string, Choice>()

  constructor(raterId: string) {
    this.raterId = raterId
  }

  canVote(itemId: string): boolean {
    return !this.voted.has(itemId)
  }

  votedChoice(itemId: string): Choice | null {
    return this.voted.get(itemId) ?? null
  }

  /** One vote per item per rater, enforced client-side before the POST. */
  buildVote(itemId: string, choice: Choice): VotePayload | null {
    if (!this.canVote(itemId)) return null
    return { rater_id: this.raterId, item_id: itemId, choice }
  }

  recordAck(itemId: string, choice: Choice): void {
    this.voted.set(itemId, choice)
  }
}

export function formatTallyLine(tally: { percent: number; n_preferred: number; n_votes: number; preferred: Choice }): string {
  return `${tally.percent.toFixed(2)}% prefer ${tally.preferred} (${tally.n_preferred}/${tally.n_votes})`
}

// ── coverage dashboard ──

export class CoverageModel {
  payload: CoveragePayload | null = null
  stale = false

  applyPayload(payload: CoveragePayload): void {
    this.payload = payload
    this.stale = false
  }

  /** Service unreachable: keep the last-known numbers, flag them stale. */
  markUnreachable(): void {
    this.stale = true
  }

  counts(): Record<string, number> {
    return this.payload?.per_category_counts ?? {}
  }

  belowMinimum(): string[] {
    const out: string[] = []
    for (const [category, count] of Object.entries(this.counts())) {
      if (count < COVERAGE_REQUIRED) out.push(category)
    }
    return out.sort()
  }
}
