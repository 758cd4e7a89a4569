// Canvas annotation editor: draw rectangles over the frame, cycle group
// labels with the keyboard, toggle risk / segmentation overlays. All pixels
// and risks come from the API; the editor only displays them.

import { ApiClient } from "./api.js";
import {
  Draft,
  DraftRect,
  LABEL_COLORS,
  addRect,
  distinctLabels,
  dropLocal,
  loadLocal,
  newDraft,
  saveLocal,
  submitHint,
  submittable,
  toPayload,
  undo,
} from "./draft.js";

const SEGMENT_PALETTE = [
  [0, 0, 0, 0],          // unknown: transparent
  [230, 85, 63, 110],
  [63, 167, 230, 110],
  [88, 194, 106, 110],
  [224, 178, 63, 110],
  [160, 111, 224, 110],
  [224, 111, 176, 110],
  [95, 214, 201, 110],
  [176, 180, 63, 110],
];

function riskToHeat(value: number): [number, number, number, number] {
  // map risk in [0, 1] to blue->red; negative (confident) stays transparent
  const v = Math.min(1, Math.max(0, value));
  if (v <= 0) return [0, 0, 0, 0];
  return [Math.round(255 * v), 40, Math.round(255 * (1 - v)), Math.round(140 * v)];
}

export interface EditorElements {
  container: HTMLElement;
  canvas: HTMLCanvasElement;
  frameLabel: HTMLElement;
  labelLegend: HTMLElement;
  hint: HTMLElement;
  submitButton: HTMLButtonElement;
  undoButton: HTMLButtonElement;
  riskToggle: HTMLInputElement;
  segToggle: HTMLInputElement;
}

export class AnnotationEditor {
  private draft: Draft = newDraft("");
  private frameImage: HTMLImageElement | null = null;
  private riskOverlay: ImageData | null = null;
  private segOverlay: HTMLCanvasElement | null = null;
  private currentLabel = 0;
  private dragStart: { x: number; y: number } | null = null;
  private dragNow: { x: number; y: number } | null = null;

  constructor(
    private el: EditorElements,
    private api: ApiClient,
    private storage: Storage,
    private onSubmitted: (frameId: string) => void,
    private onError: (message: string) => void,
  ) {
    el.canvas.addEventListener("pointerdown", (e) => this.pointerDown(e));
    el.canvas.addEventListener("pointermove", (e) => this.pointerMove(e));
    el.canvas.addEventListener("pointerup", (e) => this.pointerUp(e));
    el.undoButton.addEventListener("click", () => this.applyUndo());
    el.submitButton.addEventListener("click", () => void this.submit());
    el.riskToggle.addEventListener("change", () => this.redraw());
    el.segToggle.addEventListener("change", () => this.redraw());
    document.addEventListener("keydown", (e) => this.onKey(e));
  }

  get frameId(): string {
    return this.draft.frame_id;
  }

  async open(frameId: string): Promise<void> {
    this.draft = loadLocal(frameId, this.storage) ?? newDraft(frameId);
    this.el.frameLabel.textContent = frameId;
    this.riskOverlay = null;
    this.segOverlay = null;
    this.frameImage = await this.loadImage(this.api.frameImageUrl(frameId));
    this.el.canvas.width = this.frameImage.naturalWidth;
    this.el.canvas.height = this.frameImage.naturalHeight;
    this.redraw();
    void this.loadOverlays(frameId);
  }

  private loadImage(url: string): Promise<HTMLImageElement> {
    return new Promise((resolve, reject) => {
      const img = new Image();
      img.onload = () => resolve(img);
      img.onerror = () => reject(new Error(`cannot load ${url}`));
      img.src = url;
    });
  }

  private async loadOverlays(frameId: string): Promise<void> {
    try {
      const risk = await this.api.frameRisk(frameId);
      const bytes = Uint8Array.from(atob(risk.risk_b64), (c) => c.charCodeAt(0));
      const values = new Float32Array(bytes.buffer);
      const overlay = new ImageData(risk.width, risk.height);
      for (let i = 0; i < values.length; i++) {
        const [r, g, b, a] = riskToHeat(values[i]);
        overlay.data[4 * i] = r;
        overlay.data[4 * i + 1] = g;
        overlay.data[4 * i + 2] = b;
        overlay.data[4 * i + 3] = a;
      }
      this.riskOverlay = overlay;

      const seg = await this.api.frameSegmentation(frameId);
      const labelImg = await this.loadImage(
        `data:image/png;base64,${seg.label_png_b64}`,
      );
      const src = document.createElement("canvas");
      src.width = labelImg.naturalWidth;
      src.height = labelImg.naturalHeight;
      const sctx = src.getContext("2d");
      if (!sctx) return;
      sctx.drawImage(labelImg, 0, 0);
      const raw = sctx.getImageData(0, 0, src.width, src.height);
      const colored = new ImageData(src.width, src.height);
      for (let i = 0; i < src.width * src.height; i++) {
        const label = raw.data[4 * i];
        const [r, g, b, a] = SEGMENT_PALETTE[label % SEGMENT_PALETTE.length];
        colored.data[4 * i] = r;
        colored.data[4 * i + 1] = g;
        colored.data[4 * i + 2] = b;
        colored.data[4 * i + 3] = a;
      }
      const out = document.createElement("canvas");
      out.width = src.width;
      out.height = src.height;
      out.getContext("2d")?.putImageData(colored, 0, 0);
      this.segOverlay = out;
      this.redraw();
    } catch {
      // overlays are best-effort; the editor works without them
    }
  }

  private canvasPoint(e: PointerEvent): { x: number; y: number } {
    const rect = this.el.canvas.getBoundingClientRect();
    return {
      x: ((e.clientX - rect.left) / rect.width) * this.el.canvas.width,
      y: ((e.clientY - rect.top) / rect.height) * this.el.canvas.height,
    };
  }

  private pointerDown(e: PointerEvent): void {
    this.el.canvas.setPointerCapture(e.pointerId);
    this.dragStart = this.canvasPoint(e);
    this.dragNow = this.dragStart;
  }

  private pointerMove(e: PointerEvent): void {
    if (!this.dragStart) return;
    this.dragNow = this.canvasPoint(e);
    this.redraw();
  }

  private pointerUp(e: PointerEvent): void {
    if (!this.dragStart) return;
    const end = this.canvasPoint(e);
    const w = Math.abs(end.x - this.dragStart.x);
    const h = Math.abs(end.y - this.dragStart.y);
    if (w >= 4 && h >= 4) {
      this.draft = addRect(
        this.draft,
        (this.dragStart.x + end.x) / 2,
        (this.dragStart.y + end.y) / 2,
        w,
        h,
        this.currentLabel,
      );
      saveLocal(this.draft, this.storage);
    }
    this.dragStart = null;
    this.dragNow = null;
    this.redraw();
  }

  private onKey(e: KeyboardEvent): void {
    if (e.target instanceof HTMLInputElement && e.target.type === "text") return;
    if (/^[0-9]$/.test(e.key)) {
      this.currentLabel = parseInt(e.key, 10);
      this.redraw();
    } else if (e.key === "u") {
      this.applyUndo();
    } else if (e.key === "r") {
      this.el.riskToggle.checked = !this.el.riskToggle.checked;
      this.redraw();
    } else if (e.key === "s") {
      this.el.segToggle.checked = !this.el.segToggle.checked;
      this.redraw();
    } else if (e.key === "Enter" && submittable(this.draft)) {
      void this.submit();
    }
  }

  private applyUndo(): void {
    this.draft = undo(this.draft);
    saveLocal(this.draft, this.storage);
    this.redraw();
  }

  async submit(): Promise<void> {
    if (!submittable(this.draft)) return;
    try {
      await this.api.submitAnnotations(toPayload(this.draft));
      dropLocal(this.draft.frame_id, this.storage);
      const done = this.draft.frame_id;
      this.draft = newDraft("");
      this.onSubmitted(done);
    } catch (err) {
      this.onError(err instanceof Error ? err.message : String(err));
    }
  }

  redraw(): void {
    const ctx = this.el.canvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, this.el.canvas.width, this.el.canvas.height);
    if (this.frameImage) ctx.drawImage(this.frameImage, 0, 0);
    if (this.el.segToggle.checked && this.segOverlay) {
      ctx.drawImage(this.segOverlay, 0, 0);
    }
    if (this.el.riskToggle.checked && this.riskOverlay) {
      const off = document.createElement("canvas");
      off.width = this.riskOverlay.width;
      off.height = this.riskOverlay.height;
      off.getContext("2d")?.putImageData(this.riskOverlay, 0, 0);
      ctx.drawImage(off, 0, 0);
    }
    for (const rect of this.draft.rectangles) {
      this.strokeRect(ctx, rect);
    }
    if (this.dragStart && this.dragNow) {
      ctx.strokeStyle = LABEL_COLORS[this.currentLabel % LABEL_COLORS.length];
      ctx.setLineDash([4, 3]);
      ctx.strokeRect(
        Math.min(this.dragStart.x, this.dragNow.x),
        Math.min(this.dragStart.y, this.dragNow.y),
        Math.abs(this.dragNow.x - this.dragStart.x),
        Math.abs(this.dragNow.y - this.dragStart.y),
      );
      ctx.setLineDash([]);
    }
    this.renderLegendAndHint();
  }

  private strokeRect(ctx: CanvasRenderingContext2D, rect: DraftRect): void {
    ctx.strokeStyle = rect.color;
    ctx.lineWidth = 2;
    ctx.strokeRect(rect.cx - rect.w / 2, rect.cy - rect.h / 2, rect.w, rect.h);
    ctx.fillStyle = rect.color;
    ctx.font = "12px sans-serif";
    ctx.fillText(String(rect.group_label), rect.cx - rect.w / 2 + 3,
                 rect.cy - rect.h / 2 + 13);
  }

  private renderLegendAndHint(): void {
    const legend = this.el.labelLegend;
    legend.textContent = "";
    const labels = distinctLabels(this.draft);
    const shown = labels.includes(this.currentLabel)
      ? labels
      : [...labels, this.currentLabel].sort((a, b) => a - b);
    for (const label of shown) {
      const chip = document.createElement("span");
      chip.className = "label-chip" + (label === this.currentLabel ? " active" : "");
      chip.style.borderColor = LABEL_COLORS[label % LABEL_COLORS.length];
      chip.textContent = `group ${label}`;
      legend.appendChild(chip);
    }
    const hint = submitHint(this.draft);
    this.el.hint.textContent = hint ?? "ready to submit (Enter)";
    this.el.submitButton.disabled = hint !== null;
  }
}
