/** Wire types of the layout service (JSON over HTTP). */

/** Normalized corner box [xMin, yMin, xMax, yMax], each in [-1, 1]. */
export type NormBox = [number, number, number, number]

export interface LayoutPayload {
  width: number
  height: number
  /** Base64 PNG for plain <img> display. */
  png_base64: string
  /** Base64 raw label bytes, row-major uint8, 0 = background, k+1 = part k. */
  label_base64: string
  /** sha256 hex of the raw label bytes. */
  hash: string
}

export interface GenerateResponse {
  session_id: string
  category: string
  boxes: Record<string, NormBox>
  forced_parts: string[]
  layout: LayoutPayload
}

export interface EditResponse {
  session_id: string
  boxes: Record<string, NormBox>
  layout: LayoutPayload
}

export interface SchemaCategory {
  id: number
  name: string
  parts: string[]
}

export interface SchemaResponse {
  categories: SchemaCategory[]
  p_max: number
}

export type EditCommand =
  | { kind: 'set_box'; part: string; box: NormBox }
  | { kind: 'remove_part'; part: string }
  | { kind: 'add_part'; part_name: string; box: NormBox }

export interface Transport {
  generate(category: string, parts: string[], seed: number): Promise<GenerateResponse>
  edit(sessionId: string, edits: EditCommand[]): Promise<EditResponse>
  addPart(sessionId: string, partName: string): Promise<EditResponse>
  schema(): Promise<SchemaResponse>
}
