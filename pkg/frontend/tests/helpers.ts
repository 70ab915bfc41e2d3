import { readFileSync } from 'node:fs'
import { dirname, join } from 'node:path'
import { fileURLToPath } from 'node:url'

const here = dirname(fileURLToPath(import.meta.url))

export interface Fixture {
  request: { method: string; path: string; body: unknown }
  response: { status: number; body: any }
}

export function loadFixture(name: string): Fixture {
  return JSON.parse(readFileSync(join(here, 'fixtures', `${name}.json`), 'utf-8'))
}

export function palette(): string[] {
  return loadFixture('categories_get').response.body.categories
}
