/** Editor session controller.
 *
 * Owns the box/layout state shown to the user and keeps it equal to the last
 * server-acknowledged state. All requests are serialized on one promise
 * chain (a single in-flight request per session); gestures issued while a
 * request is pending are coalesced, latest command per part winning, and go
 * out as one edit batch. A rejected edit leaves the acknowledged boxes in
 * place, so overlays snap back.
 */

import { clampBox, pixelDeltaToNorm, scaleBox } from './coords.js'
import { decodeLayout, type DecodedLayout } from './render.js'
import type { EditCommand, EditResponse, NormBox, Transport } from './types.js'

export interface EditorState {
  sessionId: string
  category: string
  parts: string[]
  boxes: Record<string, NormBox>
  layout: DecodedLayout
  serverHash: string
  seed: number
}

export type StateListener = (state: EditorState) => void
export type ErrorListener = (message: string) => void

export class EditorSession {
  private state: EditorState | null = null
  private chain: Promise<void> = Promise.resolve()
  private pending = new Map<string, EditCommand>()
  private flushScheduled = false
  private listeners: StateListener[] = []
  private errorListeners: ErrorListener[] = []

  constructor(private transport: Transport) {}

  onChange(fn: StateListener): void {
    this.listeners.push(fn)
  }

  onError(fn: ErrorListener): void {
    this.errorListeners.push(fn)
  }

  get current(): EditorState | null {
    return this.state
  }

  /** True when every displayed pixel came from the last server response. */
  get consistent(): boolean {
    return this.state !== null && this.state.layout.hash === this.state.serverHash
  }

  async generate(category: string, parts: string[], seed: number): Promise<EditorState> {
    const res = await this.transport.generate(category, parts, seed)
    this.state = {
      sessionId: res.session_id,
      category,
      parts,
      boxes: res.boxes,
      layout: decodeLayout(res.layout),
      serverHash: res.layout.hash,
      seed,
    }
    this.emit()
    return this.state
  }

  /** Drag gesture: translate a part's box by a pixel offset on a canvas of
   * the given size. Zero displacement sends nothing. */
  dragBox(part: string, dxPx: number, dyPx: number, canvasSize: number): Promise<void> {
    if (dxPx === 0 && dyPx === 0) return Promise.resolve()
    const box = this.effectiveBox(part)
    const dx = pixelDeltaToNorm(dxPx, canvasSize)
    const dy = pixelDeltaToNorm(dyPx, canvasSize)
    const moved: NormBox = [box[0] + dx, box[1] + dy, box[2] + dx, box[3] + dy]
    return this.queueGesture({ kind: 'set_box', part, box: clampBox(moved) })
  }

  /** Resize gesture: scale a part's box about its center. */
  resizeBox(part: string, sx: number, sy: number): Promise<void> {
    if (sx === 1 && sy === 1) return Promise.resolve()
    const box = this.effectiveBox(part)
    return this.queueGesture({ kind: 'set_box', part, box: clampBox(scaleBox(box, sx, sy)) })
  }

  removePart(part: string): Promise<void> {
    this.effectiveBox(part)
    return this.queueGesture({ kind: 'remove_part', part })
  }

  /** Hallucinate a part absent from the session via the add-part flow. */
  addPart(partName: string): Promise<void> {
    return this.enqueue(async () => {
      const state = this.requireState()
      try {
        const res = await this.transport.addPart(state.sessionId, partName)
        this.accept(res)
        if (!state.parts.includes(partName)) state.parts = [...state.parts, partName]
      } catch (err) {
        this.fail(err)
      }
    })
  }

  // ------------------------------------------------------------------
  private requireState(): EditorState {
    if (!this.state) throw new Error('no active session')
    return this.state
  }

  /** The box a new gesture builds on: a queued-but-unsent edit if present,
   * otherwise the last acknowledged box. */
  private effectiveBox(part: string): NormBox {
    const queued = this.pending.get(`set_box:${part}`)
    if (queued && queued.kind === 'set_box') return queued.box
    const box = this.requireState().boxes[part]
    if (!box) throw new Error(`part ${part} is not present`)
    return box
  }

  private queueGesture(cmd: EditCommand): Promise<void> {
    const key = cmd.kind === 'add_part' ? `add:${cmd.part_name}` : `${cmd.kind}:${cmd.part}`
    this.pending.set(key, cmd)
    if (this.flushScheduled) return this.chain
    this.flushScheduled = true
    return this.enqueue(async () => {
      this.flushScheduled = false
      const batch = [...this.pending.values()]
      this.pending.clear()
      if (batch.length === 0) return
      const state = this.requireState()
      try {
        const res = await this.transport.edit(state.sessionId, batch)
        this.accept(res)
      } catch (err) {
        this.fail(err)
      }
    })
  }

  private enqueue(op: () => Promise<void>): Promise<void> {
    this.chain = this.chain.then(op)
    return this.chain
  }

  /** Server echo is authoritative: boxes and layout both come from it. */
  private accept(res: EditResponse): void {
    const state = this.requireState()
    state.boxes = res.boxes
    state.layout = decodeLayout(res.layout)
    state.serverHash = res.layout.hash
    this.emit()
  }

  private fail(err: unknown): void {
    // boxes stay at the last acknowledged state: overlays snap back
    const message = err instanceof Error ? err.message : String(err)
    for (const fn of this.errorListeners) fn(message)
    this.emit()
  }

  private emit(): void {
    if (!this.state) return
    for (const fn of this.listeners) fn(this.state)
  }
}
