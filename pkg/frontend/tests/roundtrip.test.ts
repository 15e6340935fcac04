/** Scripted end-to-end round trip against the real service: boots the Python
 * backend with tiny freshly-trained checkpoints, drives the editor controller
 * through generate -> drag -> add-part, and checks the box echo and layout
 * hash contracts. */

import { spawn, type ChildProcess } from 'node:child_process'
import { mkdtempSync, writeFileSync } from 'node:fs'
import { tmpdir } from 'node:os'
import { join } from 'node:path'
import { afterAll, beforeAll, describe, expect, it } from 'vitest'

import { HttpTransport } from '../src/api.js'
import { pixelDeltaToNorm } from '../src/coords.js'
import { EditorSession } from '../src/editor.js'
import { decodeLayout } from '../src/render.js'

const PORT = 8140 + (process.pid % 500)
const BASE = `http://127.0.0.1:${PORT}`
const CANVAS = 256 // the service renders 256x256 layouts

const BOOT = `
import sys, tempfile
import torch
torch.set_num_threads(1)
from partlayout.data import default_synth_config, synth_generate, split_corpus
from partlayout.training import preset_config, train_stage
from partlayout.server import create_app
import uvicorn

out = tempfile.mkdtemp()
corpus = split_corpus(synth_generate(default_synth_config(10), seed=1), seed=0)
tiny_box = dict(gcn_widths=(8, 16), skip_dim=4, enc_hidden=32, dec_hidden=64, latent_dim=16)
tiny_mask = dict(conv_width=2, latent_dim=16)
box = train_stage(corpus, "boxvae", preset_config(
    "boxvae", epochs=1, batch_size=8, out_dir=out, model_kwargs=tiny_box))
mask = train_stage(corpus, "labelmapvae", preset_config(
    "labelmapvae", epochs=1, batch_size=4, out_dir=out, model_kwargs=tiny_mask))
app = create_app(str(box.last_path), str(mask.last_path), corpus.schemas)
uvicorn.run(app, host="127.0.0.1", port=int(sys.argv[1]), log_level="warning")
`

let server: ChildProcess

async function waitHealthy(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs
  while (Date.now() < deadline) {
    try {
      const res = await fetch(`${BASE}/health`)
      if (res.ok) return
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 500))
  }
  throw new Error('backend did not become healthy in time')
}

beforeAll(async () => {
  const dir = mkdtempSync(join(tmpdir(), 'layout-editor-'))
  const script = join(dir, 'boot_backend.py')
  writeFileSync(script, BOOT)
  server = spawn('python3', [script, String(PORT)], {
    cwd: join(__dirname, '..', '..'),
    stdio: ['ignore', 'inherit', 'inherit'],
  })
  await waitHealthy(110_000)
}, 120_000)

afterAll(() => {
  server?.kill('SIGKILL')
})

describe('live service round trip', () => {
  it('generates, drags by a known offset, and matches hashes', async () => {
    const transport = new HttpTransport(BASE)
    const session = new EditorSession(transport)

    const schema = await transport.schema()
    expect(schema.categories.map((c) => c.name)).toContain('biped')

    const state = await session.generate('biped', ['torso', 'head', 'leg_l'], 11)
    // rendered image hash (recomputed from the label bytes the UI draws)
    // equals the hash the service reported
    expect(state.layout.hash).toBe(state.serverHash)

    const before = [...state.boxes['head']]
    const [dxPx, dyPx] = [24, -12]
    await session.dragBox('head', dxPx, dyPx, CANVAS)
    const echoed = session.current!.boxes['head']
    const expected = [
      before[0] + pixelDeltaToNorm(dxPx, CANVAS),
      before[1] + pixelDeltaToNorm(dyPx, CANVAS),
      before[2] + pixelDeltaToNorm(dxPx, CANVAS),
      before[3] + pixelDeltaToNorm(dyPx, CANVAS),
    ]
    const pxEquivalent = 2 / CANVAS
    for (let j = 0; j < 4; j++) {
      expect(Math.abs(echoed[j] - expected[j])).toBeLessThanOrEqual(pxEquivalent)
    }
    expect(session.consistent).toBe(true)
    expect(session.current!.layout.hash).toBe(session.current!.serverHash)
  }, 60_000)

  it('same-seed regeneration returns an identical image hash', async () => {
    const transport = new HttpTransport(BASE)
    const a = await new EditorSession(transport).generate('glider', ['fuselage', 'wing_l'], 4)
    const b = await new EditorSession(transport).generate('glider', ['fuselage', 'wing_l'], 4)
    expect(a.layout.hash).toBe(b.layout.hash)
  }, 60_000)

  it('add-part keeps existing boxes and extends the legend set', async () => {
    const transport = new HttpTransport(BASE)
    const session = new EditorSession(transport)
    const state = await session.generate('glider', ['fuselage', 'wing_l', 'wing_r'], 2)
    const fuselageBefore = [...state.boxes['fuselage']]
    await session.addPart('tail')
    const current = session.current!
    expect(Object.keys(current.boxes).sort()).toEqual(
      ['fuselage', 'tail', 'wing_l', 'wing_r'])
    expect(current.boxes['fuselage']).toEqual(fuselageBefore)
    const decoded = decodeLayout({
      width: current.layout.width,
      height: current.layout.height,
      png_base64: '',
      label_base64: Buffer.from(current.layout.labels).toString('base64'),
      hash: current.serverHash,
    })
    expect(decoded.hash).toBe(current.serverHash)
  }, 60_000)

  it('rejected edits surface the service reason and keep state', async () => {
    const transport = new HttpTransport(BASE)
    const session = new EditorSession(transport)
    const state = await session.generate('biped', ['torso'], 1)
    const before = [...state.boxes['torso']]
    const errors: string[] = []
    session.onError((m) => errors.push(m))
    await session.dragBox('torso', 100_000, 0, CANVAS)
    expect(errors.length).toBe(1)
    expect(session.current!.boxes['torso']).toEqual(before)
  }, 60_000)
})
