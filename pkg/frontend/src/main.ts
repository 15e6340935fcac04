/** Browser wiring: canvas rendering, drag/resize handles, legend, toolbar.
 * All state transitions run through EditorSession; this file only draws the
 * latest acknowledged state and converts pointer events into gestures.
 */

import { HttpTransport } from './api.js'
import { boxToPixels } from './coords.js'
import { EditorSession, type EditorState } from './editor.js'
import { labelsToRgba, legend } from './render.js'
import type { SchemaResponse } from './types.js'

const CANVAS_SIZE = 256
const HANDLE_PX = 8

const baseUrl = (window as { LAYOUT_API?: string }).LAYOUT_API ?? 'http://127.0.0.1:8000'
const transport = new HttpTransport(baseUrl)
const session = new EditorSession(transport)

const canvas = document.getElementById('layout') as HTMLCanvasElement
const overlay = document.getElementById('overlay') as HTMLCanvasElement
const legendEl = document.getElementById('legend') as HTMLUListElement
const categoryEl = document.getElementById('category') as HTMLSelectElement
const partsEl = document.getElementById('parts') as HTMLFieldSetElement
const seedEl = document.getElementById('seed') as HTMLInputElement
const addPartEl = document.getElementById('add-part') as HTMLSelectElement
const toastEl = document.getElementById('toast') as HTMLDivElement

let schema: SchemaResponse

function toast(message: string): void {
  toastEl.textContent = message
  toastEl.classList.add('visible')
  setTimeout(() => toastEl.classList.remove('visible'), 4000)
}

function drawLayout(state: EditorState): void {
  const ctx = canvas.getContext('2d')!
  const image = new ImageData(labelsToRgba(state.layout), state.layout.width, state.layout.height)
  createImageBitmap(image).then((bitmap) => {
    ctx.imageSmoothingEnabled = false
    ctx.clearRect(0, 0, canvas.width, canvas.height)
    ctx.drawImage(bitmap, 0, 0, canvas.width, canvas.height)
  })
}

function drawOverlay(state: EditorState): void {
  const ctx = overlay.getContext('2d')!
  ctx.clearRect(0, 0, overlay.width, overlay.height)
  for (const [part, box] of Object.entries(state.boxes)) {
    const px = boxToPixels(box, CANVAS_SIZE)
    ctx.strokeStyle = '#ffffff'
    ctx.lineWidth = 1
    ctx.setLineDash([4, 3])
    ctx.strokeRect(px.left, px.top, px.width, px.height)
    ctx.setLineDash([])
    ctx.fillStyle = '#ffffff'
    ctx.fillRect(px.left + px.width - HANDLE_PX / 2, px.top + px.height - HANDLE_PX / 2,
                 HANDLE_PX, HANDLE_PX)
    ctx.font = '10px sans-serif'
    ctx.fillText(part, px.left + 2, px.top + 10)
  }
}

function drawLegend(state: EditorState): void {
  const cat = schema.categories.find((c) => c.name === state.category)!
  legendEl.innerHTML = ''
  for (const entry of legend(cat.parts, Object.keys(state.boxes))) {
    const li = document.createElement('li')
    const swatch = document.createElement('span')
    swatch.className = 'swatch'
    swatch.style.backgroundColor = entry.color
    li.append(swatch, document.createTextNode(entry.part))
    legendEl.append(li)
  }
  addPartEl.innerHTML = '<option value="">add part…</option>'
  for (const part of cat.parts) {
    if (!(part in state.boxes)) {
      const opt = document.createElement('option')
      opt.value = part
      opt.textContent = part
      addPartEl.append(opt)
    }
  }
}

session.onChange((state) => {
  drawLayout(state)
  drawOverlay(state)
  drawLegend(state)
})
session.onError((message) => toast(`edit rejected: ${message}`))

// ---------------------------------------------------------------------------
// pointer gestures: drag inside a box to move it, drag its corner handle to
// resize; nothing is rendered optimistically
// ---------------------------------------------------------------------------

interface Gesture {
  part: string
  mode: 'move' | 'resize'
  startX: number
  startY: number
  boxWidthPx: number
  boxHeightPx: number
}

let gesture: Gesture | null = null

function hitTest(x: number, y: number): Gesture | null {
  const state = session.current
  if (!state) return null
  for (const [part, box] of Object.entries(state.boxes)) {
    const px = boxToPixels(box, CANVAS_SIZE)
    const onHandle =
      Math.abs(x - (px.left + px.width)) <= HANDLE_PX &&
      Math.abs(y - (px.top + px.height)) <= HANDLE_PX
    if (onHandle) {
      return { part, mode: 'resize', startX: x, startY: y,
               boxWidthPx: px.width, boxHeightPx: px.height }
    }
    if (x >= px.left && x <= px.left + px.width && y >= px.top && y <= px.top + px.height) {
      return { part, mode: 'move', startX: x, startY: y,
               boxWidthPx: px.width, boxHeightPx: px.height }
    }
  }
  return null
}

function canvasPoint(ev: PointerEvent): { x: number; y: number } {
  // CSS pixels -> canvas pixels (the canvas is displayed scaled up)
  const rect = overlay.getBoundingClientRect()
  return {
    x: (ev.clientX - rect.left) * (overlay.width / rect.width),
    y: (ev.clientY - rect.top) * (overlay.height / rect.height),
  }
}

overlay.addEventListener('pointerdown', (ev) => {
  const { x, y } = canvasPoint(ev)
  gesture = hitTest(x, y)
  if (gesture) overlay.setPointerCapture(ev.pointerId)
})

overlay.addEventListener('pointerup', (ev) => {
  if (!gesture) return
  const { x, y } = canvasPoint(ev)
  const dx = x - gesture.startX
  const dy = y - gesture.startY
  const g = gesture
  gesture = null
  if (g.mode === 'move') {
    void session.dragBox(g.part, dx, dy, CANVAS_SIZE)
  } else {
    const sx = (g.boxWidthPx + dx) / g.boxWidthPx
    const sy = (g.boxHeightPx + dy) / g.boxHeightPx
    if (sx > 0 && sy > 0) void session.resizeBox(g.part, sx, sy)
  }
})

// ---------------------------------------------------------------------------
// toolbar
// ---------------------------------------------------------------------------

function selectedParts(): string[] {
  return [...partsEl.querySelectorAll<HTMLInputElement>('input:checked')].map((el) => el.value)
}

function populateParts(categoryName: string): void {
  const cat = schema.categories.find((c) => c.name === categoryName)!
  partsEl.innerHTML = ''
  for (const part of cat.parts) {
    const label = document.createElement('label')
    const box = document.createElement('input')
    box.type = 'checkbox'
    box.value = part
    box.checked = true
    label.append(box, document.createTextNode(part))
    partsEl.append(label)
  }
}

document.getElementById('generate')!.addEventListener('click', () => {
  session
    .generate(categoryEl.value, selectedParts(), Number(seedEl.value) || 0)
    .catch((err) => toast(`generate failed: ${err.message ?? err}`))
})

addPartEl.addEventListener('change', () => {
  if (addPartEl.value) void session.addPart(addPartEl.value)
})

categoryEl.addEventListener('change', () => populateParts(categoryEl.value))

transport
  .schema()
  .then((s) => {
    schema = s
    categoryEl.innerHTML = ''
    for (const cat of s.categories) {
      const opt = document.createElement('option')
      opt.value = cat.name
      opt.textContent = cat.name
      categoryEl.append(opt)
    }
    populateParts(s.categories[0].name)
  })
  .catch((err) => toast(`service unreachable: ${err.message ?? err}`))
