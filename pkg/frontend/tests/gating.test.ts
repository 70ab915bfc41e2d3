/** Submit-gating rules: nothing leaves the client while a draft is incomplete,
 * and a rater gets one vote per item. */

import { describe, expect, it } from 'vitest'

import { AnnotationSession, CoverageModel, ExemplarDraft, TwoAfcSession } from '../src/state.js'
import { loadFixture, palette } from './helpers.js'

const item = { image_id: 'img-abc', path: 'uri://x.png' }

describe('annotation gating', () => {
  it('blocked until verdict chosen and a category selected', () => {
    const session = new AnnotationSession('expert-1')
    session.queue = [item]
    expect(session.canSubmit()).toBe(false)
    expect(session.blockReason()).toMatch(/verdict/)

    session.setVerdict('fake')
    expect(session.canSubmit()).toBe(false)
    expect(session.blockReason()).toMatch(/category/)

    session.toggleCategory('texture')
    expect(session.canSubmit()).toBe(true)
    expect(session.blockReason()).toBeNull()

    session.toggleCategory('texture') // toggling off re-blocks
    expect(session.canSubmit()).toBe(false)
  })

  it('buildPayload refuses an incomplete draft', () => {
    const session = new AnnotationSession('expert-1')
    session.queue = [item]
    session.setVerdict('real')
    expect(() => session.buildPayload(palette())).toThrow(/category/)
  })

  it('keyboard shortcuts drive verdict and category toggles', () => {
    const session = new AnnotationSession('expert-1')
    session.queue = [item]
    const pal = palette()
    expect(session.handleShortcut('f', pal)).toBe(true)
    expect(session.verdict).toBe('fake')
    expect(session.handleShortcut('1', pal)).toBe(true)
    expect(session.categories.has(pal[0]!)).toBe(true)
    expect(session.handleShortcut('z', pal)).toBe(false)
  })

  it('skip-and-report records the failure and advances', () => {
    const session = new AnnotationSession('expert-1')
    session.queue = [item, { image_id: 'img-def', path: 'uri://y.png' }]
    session.skipAndReport('image failed to load')
    expect(session.skipped).toEqual([{ image_id: 'img-abc', reason: 'image failed to load' }])
    expect(session.current()?.image_id).toBe('img-def')
  })

  it('advancing clears the draft', () => {
    const session = new AnnotationSession('expert-1')
    session.queue = [item, item]
    session.setVerdict('fake')
    session.toggleCategory('texture')
    session.advance()
    expect(session.verdict).toBeNull()
    expect(session.categories.size).toBe(0)
  })
})

describe('exemplar gating', () => {
  it('blocked until text and covered set are non-empty', () => {
    const draft = new ExemplarDraft('uri://img.png')
    expect(draft.canSubmit()).toBe(false)

    draft.reasoningText = '   '
    draft.toggleCovered('texture')
    expect(draft.canSubmit()).toBe(false)
    expect(draft.blockReason()).toMatch(/reasoning/)

    draft.reasoningText = 'The texture tiles.'
    expect(draft.canSubmit()).toBe(true)
  })
})

describe('2AFC gating', () => {
  it('one vote per item per rater, double submits return null', () => {
    const session = new TwoAfcSession('rater-1')
    expect(session.buildVote('pair-1', 'A')).not.toBeNull()
    session.recordAck('pair-1', 'A')
    expect(session.canVote('pair-1')).toBe(false)
    expect(session.buildVote('pair-1', 'B')).toBeNull()
    expect(session.votedChoice('pair-1')).toBe('A')
    expect(session.canVote('pair-2')).toBe(true)
  })
})

describe('coverage staleness', () => {
  it('keeps last-known numbers when the service goes away', () => {
    const model = new CoverageModel()
    model.applyPayload(loadFixture('coverage_get').response.body)
    expect(model.stale).toBe(false)
    const before = model.counts()
    model.markUnreachable()
    expect(model.stale).toBe(true)
    expect(model.counts()).toEqual(before)
  })
})
