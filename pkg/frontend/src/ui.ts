/**
 * DOM wiring: renders the view state onto the page and maps user events
 * to state transitions plus service calls. At most one query is in
 * flight; superseded responses are dropped by sequence number inside
 * the state module.
 */

import { ApiClient, ServiceError } from './api.js'
import { foldQueryOutcome, runQuery } from './controller.js'
import { compositeOver, renderHeatmap } from './heatmap.js'
import { classColor, renderLabels } from './palette.js'
import {
  DisplayMode,
  ViewState,
  applyQueryError,
  applySegment,
  applyThreshold,
  beginQuery,
  dismissBanner,
  initialState,
  selectTarget,
  setDisplayMode,
} from './state.js'

interface Elements {
  target: HTMLSelectElement
  prompt: HTMLInputElement
  submit: HTMLButtonElement
  threshold: HTMLInputElement
  thresholdValue: HTMLElement
  modes: HTMLElement
  stats: HTMLElement
  banner: HTMLElement
  canvas: HTMLCanvasElement
  cellList: HTMLElement
  legend: HTMLElement
  history: HTMLElement
}

export class Console {
  private state: ViewState = initialState()
  private baseImages = new Map<string, HTMLImageElement>()

  constructor(
    private readonly api: ApiClient,
    private readonly el: Elements,
  ) {
    el.submit.addEventListener('click', () => void this.submitPrompt())
    el.prompt.addEventListener('keydown', (ev) => {
      if (ev.key === 'Enter') void this.submitPrompt()
    })
    el.target.addEventListener('change', () => {
      this.state = selectTarget(this.state, el.target.value)
      this.render()
    })
    el.threshold.addEventListener('input', () => {
      this.state = applyThreshold(this.state, parseFloat(el.threshold.value))
      this.render()
    })
    el.banner.addEventListener('click', () => {
      this.state = dismissBanner(this.state)
      this.render()
    })
    el.modes.querySelectorAll('button').forEach((button) => {
      button.addEventListener('click', () => void this.switchMode(button.dataset.mode as DisplayMode))
    })
  }

  async boot(): Promise<void> {
    const inventory = await this.api.session()
    const targets = [...inventory.volumes]
    if (inventory.map_cells !== null) targets.push('map')
    this.el.target.innerHTML = ''
    for (const target of targets) {
      const option = document.createElement('option')
      option.value = target
      option.textContent = target === 'map' ? '3D map' : target
      this.el.target.appendChild(option)
    }
    if (targets.length) {
      this.state = selectTarget(this.state, targets[0])
      for (const id of inventory.images) {
        const img = new Image()
        img.src = this.api.imageUrl(id)
        this.baseImages.set(id, img)
      }
    }
    this.render()
  }

  async submitPrompt(): Promise<void> {
    const prompt = this.el.prompt.value.trim()
    const target = this.state.target
    if (!prompt || !target) return
    // commit the sequence bump before awaiting so overlapping requests
    // stay ordered and stale replies get dropped at fold time
    const begun = beginQuery(this.state, prompt)
    this.state = begun.state
    const outcome = await runQuery(this.api, target, prompt)
    this.state = foldQueryOutcome(this.state, begun.seq, prompt, outcome)
    this.render()
  }

  async switchMode(mode: DisplayMode): Promise<void> {
    this.state = setDisplayMode(this.state, mode)
    const target = this.state.target
    if (mode !== 'heatmap' && target && target !== 'map' && !this.state.segment) {
      try {
        this.state = applySegment(this.state, await this.api.segment(target, 'probe'))
      } catch (err) {
        const name = err instanceof ServiceError ? err.errorName : String(err)
        this.state = applyQueryError(this.state, this.state.issuedSeq, name)
      }
    }
    this.render()
  }

  render(): void {
    const { state, el } = this

    el.banner.textContent = state.banner ?? ''
    el.banner.style.display = state.banner ? 'block' : 'none'

    el.thresholdValue.textContent = state.threshold.toFixed(2)
    el.stats.textContent = state.stats
      ? `min ${state.stats.min.toFixed(4)}  max ${state.stats.max.toFixed(4)}  mean ${state.stats.mean.toFixed(4)}`
      : ''
    el.history.textContent = state.history.join(' · ')

    if (state.cells) {
      el.cellList.style.display = 'block'
      el.canvas.style.display = 'none'
      el.cellList.innerHTML = ''
      for (const cell of state.cells) {
        const row = document.createElement('div')
        row.textContent = `(${cell.key.join(', ')})  ${cell.similarity.toFixed(4)}`
        el.cellList.appendChild(row)
      }
      return
    }

    el.cellList.style.display = 'none'
    el.canvas.style.display = 'block'
    this.drawCanvas()
    this.drawLegend()
  }

  private drawCanvas(): void {
    const { state, el } = this
    const ctx = el.canvas.getContext('2d')
    if (!ctx || !state.target) return

    const pgm = state.heatmap
    const seg = state.segment
    const width = pgm?.width ?? seg?.labels.width ?? 0
    const height = pgm?.height ?? seg?.labels.height ?? 0
    if (!width || !height) {
      ctx.clearRect(0, 0, el.canvas.width, el.canvas.height)
      return
    }

    const panels = state.displayMode === 'side-by-side' ? 2 : 1
    el.canvas.width = width * panels
    el.canvas.height = height
    const base = this.basePixels(state.target, width, height)

    if (state.displayMode !== 'closed-set' && pgm && state.stats) {
      const overlay = renderHeatmap(pgm, state.threshold, state.stats.max)
      this.putComposite(ctx, base, overlay, width, height, 0)
    }
    if (state.displayMode === 'closed-set' && seg) {
      this.putComposite(ctx, base, renderLabels(seg.labels), width, height, 0)
    }
    if (state.displayMode === 'side-by-side' && seg) {
      this.putComposite(ctx, base, renderLabels(seg.labels), width, height, width)
    }
  }

  private putComposite(
    ctx: CanvasRenderingContext2D,
    base: Uint8ClampedArray,
    overlay: Uint8ClampedArray,
    width: number,
    height: number,
    offsetX: number,
  ): void {
    const blended = compositeOver(base, overlay)
    ctx.putImageData(new ImageData(blended, width, height), offsetX, 0)
  }

  /** Display image resampled to artifact size; neutral gray if absent. */
  private basePixels(target: string, width: number, height: number): Uint8ClampedArray {
    const img = this.baseImages.get(target)
    if (img && img.complete && img.naturalWidth > 0) {
      const off = document.createElement('canvas')
      off.width = width
      off.height = height
      const offCtx = off.getContext('2d')!
      offCtx.drawImage(img, 0, 0, width, height)
      return new Uint8ClampedArray(offCtx.getImageData(0, 0, width, height).data)
    }
    const gray = new Uint8ClampedArray(width * height * 4)
    for (let o = 0; o < gray.length; o += 4) {
      gray[o] = gray[o + 1] = gray[o + 2] = 160
      gray[o + 3] = 255
    }
    return gray
  }

  private drawLegend(): void {
    const { state, el } = this
    el.legend.innerHTML = ''
    if (state.displayMode === 'heatmap' || !state.segment) return
    state.segment.legend.forEach((name, index) => {
      const item = document.createElement('span')
      item.className = 'legend-item'
      const swatch = document.createElement('span')
      swatch.className = 'swatch'
      const [r, g, b] = classColor(index)
      swatch.style.background = `rgb(${r}, ${g}, ${b})`
      item.appendChild(swatch)
      item.appendChild(document.createTextNode(name))
      el.legend.appendChild(item)
    })
  }
}

export function mountConsole(api: ApiClient, root: Document): Console {
  const byId = <T extends HTMLElement>(id: string): T => {
    const node = root.getElementById(id)
    if (!node) throw new Error(`missing element #${id}`)
    return node as T
  }
  return new Console(api, {
    target: byId<HTMLSelectElement>('target'),
    prompt: byId<HTMLInputElement>('prompt'),
    submit: byId<HTMLButtonElement>('submit'),
    threshold: byId<HTMLInputElement>('threshold'),
    thresholdValue: byId('threshold-value'),
    modes: byId('modes'),
    stats: byId('stats'),
    banner: byId('banner'),
    canvas: byId<HTMLCanvasElement>('canvas'),
    cellList: byId('cell-list'),
    legend: byId('legend'),
    history: byId('history'),
  })
}
