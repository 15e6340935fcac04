/** Thin typed client for the layout service. */

import type {
  EditCommand,
  EditResponse,
  GenerateResponse,
  SchemaResponse,
  Transport,
} from './types.js'

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail)
  }
}

type FetchLike = typeof fetch

export class HttpTransport implements Transport {
  constructor(private baseUrl: string, private fetchImpl: FetchLike = fetch) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const res = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    })
    if (!res.ok) {
      let detail = `${res.status}`
      try {
        const payload = (await res.json()) as { detail?: string }
        if (payload.detail) detail = payload.detail
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(res.status, detail)
    }
    return (await res.json()) as T
  }

  generate(category: string, parts: string[], seed: number): Promise<GenerateResponse> {
    return this.post('/generate', { category, parts, seed })
  }

  edit(sessionId: string, edits: EditCommand[]): Promise<EditResponse> {
    return this.post('/edit', { session_id: sessionId, edits })
  }

  addPart(sessionId: string, partName: string): Promise<EditResponse> {
    return this.post('/addpart', { session_id: sessionId, part_name: partName })
  }

  async schema(): Promise<SchemaResponse> {
    const res = await this.fetchImpl(`${this.baseUrl}/schema`)
    if (!res.ok) throw new ApiError(res.status, `schema fetch failed: ${res.status}`)
    return (await res.json()) as SchemaResponse
  }
}
