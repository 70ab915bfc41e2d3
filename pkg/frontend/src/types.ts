/** REST payload shapes, mirroring the annotation service JSON one-to-one. */

export type Verdict = 'fake' | 'real'
export type Polarity = 'positive' | 'negative'
export type Choice = 'A' | 'B'

export interface QueueItem {
  image_id: string
  path: string
}

export interface QueuePayload {
  annotator: string
  items: QueueItem[]
}

export interface AnnotationPayload {
  image_id: string
  annotator_id: string
  verdict: Verdict
  categories: string[]
  notes: string | null
  timestamp: string | null
}

export interface AnnotationAck {
  verdict_correct: boolean
}

export interface ExemplarPayload {
  image_id: string
  polarity: Polarity
  reasoning_text: string
  covered: string[]
}

export interface ExemplarAck {
  exemplar_id: string
  balance: { positive: number; negative: number; balanced: boolean }
}

export interface VotePayload {
  rater_id: string
  item_id: string
  choice: Choice
}

export interface VoteAck {
  status: 'recorded' | 'duplicate'
}

export interface CoverageViolation {
  category: string
  count: number
  required: number
}

export interface CoveragePayload {
  per_category_counts: Record<string, number>
  violations: CoverageViolation[]
  has_positive: boolean
  has_negative: boolean
  balance: { positive: number; negative: number; balanced: boolean }
}

export interface TallyPayload {
  preferred: Choice
  rate: number
  percent: number
  n_votes: number
  n_preferred: number
}

export interface CategoriesPayload {
  categories: string[]
}
