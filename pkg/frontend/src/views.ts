/** Render views as HTML strings; main.ts injects them and wires events.
 * Keeping renderers pure keeps every display rule assertable in node. */

import type { CoverageModel, AnnotationSession, TwoAfcSession } from './state.js'
import type { QueueItem, TallyPayload } from './types.js'
import { CATEGORY_KEYS, COVERAGE_REQUIRED, formatTallyLine } from './state.js'

function esc(text: string): string {
  return text.replace(/&/g, '&amp;').replace(/</g, '&lt;').replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
}

export function renderAnnotationView(item: QueueItem, palette: string[],
                                     session: AnnotationSession): string {
  const toggles = palette.map((category, i) => {
    const on = session.categories.has(category)
    const key = CATEGORY_KEYS[i] ?? ''
    return `<button class="cat-toggle${on ? ' on' : ''}" data-category="${esc(category)}"` +
      ` aria-pressed="${on}" title="key: ${key}">${esc(category)}</button>`
  }).join('\n')
  const blocked = session.blockReason()
  return `
<section class="annotation-view" data-image="${esc(item.image_id)}">
  <figure>
    <img src="${esc(item.path)}" alt="image under review" id="review-image">
    <button id="skip-report" class="ghost" hidden>image failed to load: skip &amp; report</button>
  </figure>
  <div class="palette">${toggles}</div>
  <fieldset class="verdict">
    <label><input type="radio" name="verdict" value="fake"${session.verdict === 'fake' ? ' checked' : ''}> fake (f)</label>
    <label><input type="radio" name="verdict" value="real"${session.verdict === 'real' ? ' checked' : ''}> real (r)</label>
  </fieldset>
  <textarea id="notes" placeholder="optional notes (area of occurrence, commonsense knowledge)">${esc(session.notes)}</textarea>
  <button id="submit-annotation"${session.canSubmit() ? '' : ' disabled'}>submit</button>
  ${blocked ? `<p class="inline-block-reason">${esc(blocked)}</p>` : ''}
</section>`
}

export function render2afcView(itemId: string, leftLabel: string, rightLabel: string,
                               session: TwoAfcSession, tally: TallyPayload | null): string {
  const voted = session.votedChoice(itemId)
  const disable = voted !== null ? ' disabled' : ''
  return `
<section class="afc-view" data-item="${esc(itemId)}">
  <div class="pair">
    <button class="afc-choice" data-choice="A"${disable}>${esc(leftLabel)}</button>
    <button class="afc-choice" data-choice="B"${disable}>${esc(rightLabel)}</button>
  </div>
  ${voted ? `<p class="voted-note">vote recorded: ${voted}</p>` : ''}
  ${tally ? `<p class="tally">${esc(formatTallyLine(tally))}</p>` : ''}
</section>`
}

export function renderCoverageDashboard(model: CoverageModel): string {
  const counts = model.counts()
  const low = new Set(model.belowMinimum())
  const rows = Object.keys(counts).sort().map((category) => {
    const classes = low.has(category) ? ' class="low"' : ''
    return `<li${classes} data-category="${esc(category)}">` +
      `${esc(category)}: ${counts[category]} / ${COVERAGE_REQUIRED}</li>`
  }).join('\n')
  const balance = model.payload?.balance
  return `
<section class="coverage-view">
  ${model.stale ? '<div class="stale-banner">showing cached numbers: service unreachable</div>' : ''}
  <ul class="coverage-counts">${rows}</ul>
  ${balance ? `<p class="balance">exemplars: ${balance.positive} positive / ${balance.negative} negative` +
    `${balance.balanced ? ' (balanced)' : ''}</p>` : ''}
</section>`
}
