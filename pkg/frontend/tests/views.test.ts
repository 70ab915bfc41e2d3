/** Display rules: the full 16-toggle palette, disabled submits, vote controls
 * that lock after voting, and coverage highlighting equal to the service
 * payload. */

import { describe, expect, it } from 'vitest'

import { AnnotationSession, CoverageModel, TwoAfcSession } from '../src/state.js'
import { render2afcView, renderAnnotationView, renderCoverageDashboard } from '../src/views.js'
import { loadFixture, palette } from './helpers.js'

const item = { image_id: 'img-abc', path: 'uri://x.png' }

describe('annotation view', () => {
  it('renders exactly 16 category toggles', () => {
    const html = renderAnnotationView(item, palette(), new AnnotationSession('expert-1'))
    expect(html.match(/class="cat-toggle/g)).toHaveLength(16)
    expect(html).toContain('light&amp;shadow')
  })

  it('submit is disabled with an inline reason until the draft is complete', () => {
    const session = new AnnotationSession('expert-1')
    session.queue = [item]
    let html = renderAnnotationView(item, palette(), session)
    expect(html).toContain('<button id="submit-annotation" disabled>')
    expect(html).toContain('inline-block-reason')

    session.setVerdict('fake')
    session.toggleCategory('texture')
    html = renderAnnotationView(item, palette(), session)
    expect(html).toContain('<button id="submit-annotation">')
    expect(html).not.toContain('inline-block-reason')
  })

  it('selected categories render pressed', () => {
    const session = new AnnotationSession('expert-1')
    session.queue = [item]
    session.toggleCategory('texture')
    const html = renderAnnotationView(item, palette(), session)
    expect(html).toContain('cat-toggle on" data-category="texture" aria-pressed="true"')
  })
})

describe('2AFC view', () => {
  it('offers exactly two choices', () => {
    const html = render2afcView('pair-1', 'candidate A', 'candidate B',
      new TwoAfcSession('rater-1'), null)
    expect(html.match(/class="afc-choice"/g)).toHaveLength(2)
    expect(html).not.toContain('disabled')
  })

  it('revisiting a voted item disables the controls', () => {
    const session = new TwoAfcSession('rater-1')
    session.recordAck('pair-1', 'A')
    const html = render2afcView('pair-1', 'candidate A', 'candidate B', session, null)
    expect(html.match(/ disabled/g)).toHaveLength(2)
    expect(html).toContain('vote recorded: A')
  })

  it('shows the recorded 600-vote tally line', () => {
    const tally = loadFixture('tally_600_get').response.body
    const html = render2afcView('pair-1', 'a', 'b', new TwoAfcSession('r'), tally)
    expect(html).toContain('99.17% prefer A (595/600)')
  })
})

describe('coverage dashboard', () => {
  it('numbers equal the GET /coverage payload and low rows are highlighted', () => {
    const payload = loadFixture('coverage_get').response.body
    const model = new CoverageModel()
    model.applyPayload(payload)
    const html = renderCoverageDashboard(model)
    for (const [category, count] of Object.entries(payload.per_category_counts)) {
      const needle = `${category}: ${count} / 3`
      expect(html).toContain(needle.replace('&', '&amp;'))
      const low = (count as number) < 3
      if (low) {
        expect(html).toContain(`<li class="low" data-category="${category.replace('&', '&amp;')}"`)
      }
    }
    expect(html).not.toContain('stale-banner')
  })

  it('no highlights once every category reaches three', () => {
    const payload = structuredClone(loadFixture('coverage_get').response.body)
    for (const key of Object.keys(payload.per_category_counts)) {
      payload.per_category_counts[key] = 3
    }
    payload.violations = []
    const model = new CoverageModel()
    model.applyPayload(payload)
    expect(renderCoverageDashboard(model)).not.toContain('class="low"')
  })

  it('stale banner appears when the service is unreachable', () => {
    const model = new CoverageModel()
    model.applyPayload(loadFixture('coverage_get').response.body)
    model.markUnreachable()
    expect(renderCoverageDashboard(model)).toContain('stale-banner')
  })
})
