// Risk dashboard: FLR curve with the risk-level line, sequence-risk gauge,
// and the trigger banner. Pure view over /api/risk-series.

import type { RiskSeries } from "./types.js";

export interface DashboardState {
  series: RiskSeries | null;
  stale: boolean;
  updating: boolean;
  lastError: string | null;
}

export function bannerVisible(state: DashboardState): boolean {
  return !!state.series && state.series.triggered;
}

export function gaugeText(series: RiskSeries): string {
  return `sequence risk ${(series.phi_s * 100).toFixed(1)}% ` +
    `(threshold ${(series.threshold * 100).toFixed(0)}%, ` +
    `window ${series.window})`;
}

export function drawFlrChart(canvas: HTMLCanvasElement, series: RiskSeries): void {
  let ctx: CanvasRenderingContext2D | null = null;
  try {
    ctx = canvas.getContext("2d");
  } catch {
    return; // no 2d context in this environment (e.g. jsdom)
  }
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#141a22";
  ctx.fillRect(0, 0, width, height);

  const pad = 24;
  const plotW = width - 2 * pad;
  const plotH = height - 2 * pad;
  const y = (v: number) => pad + (1 - Math.min(1, Math.max(0, v))) * plotH;

  // risk-level line
  ctx.strokeStyle = "#e0b23f";
  ctx.setLineDash([5, 4]);
  ctx.beginPath();
  ctx.moveTo(pad, y(series.epsilon));
  ctx.lineTo(width - pad, y(series.epsilon));
  ctx.stroke();
  ctx.setLineDash([]);
  ctx.fillStyle = "#e0b23f";
  ctx.font = "11px sans-serif";
  ctx.fillText(`risk level ${(series.epsilon * 100).toFixed(0)}%`, pad + 4, y(series.epsilon) - 4);

  const points = series.series;
  if (points.length > 0) {
    const step = points.length > 1 ? plotW / (points.length - 1) : 0;
    ctx.strokeStyle = "#3fa7e6";
    ctx.lineWidth = 1.6;
    ctx.beginPath();
    points.forEach((p, i) => {
      const px = pad + i * step;
      const py = y(p.flr);
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.stroke();
    ctx.fillStyle = "#3fa7e6";
    for (let i = 0; i < points.length; i++) {
      if (points[i].flr > series.epsilon) {
        ctx.fillRect(pad + i * step - 1.5, y(points[i].flr) - 1.5, 3, 3);
      }
    }
  }

  // axes
  ctx.strokeStyle = "#394452";
  ctx.lineWidth = 1;
  ctx.strokeRect(pad, pad, plotW, plotH);
  ctx.fillStyle = "#8a93a1";
  ctx.fillText("100%", 2, y(1) + 4);
  ctx.fillText("0%", 2, y(0) + 4);
}

export interface DashboardElements {
  banner: HTMLElement;
  gauge: HTMLElement;
  chart: HTMLCanvasElement;
  version: HTMLElement;
  staleIndicator: HTMLElement;
  openBatchButton: HTMLButtonElement;
  updateButton: HTMLButtonElement;
  jobStatus: HTMLElement;
}

export function renderDashboard(el: DashboardElements, state: DashboardState): void {
  el.staleIndicator.classList.toggle("hidden", !state.stale);
  if (state.lastError) {
    el.staleIndicator.textContent = `connection lost: ${state.lastError}`;
  }
  const series = state.series;
  if (!series) return;
  el.banner.classList.toggle("hidden", !bannerVisible(state));
  el.gauge.textContent = gaugeText(series);
  el.version.textContent = `model v${series.bundle_version}`;
  el.openBatchButton.disabled = !series.triggered;
  el.updateButton.disabled = state.updating;
  drawFlrChart(el.chart, series);
}
