// @vitest-environment jsdom

import { describe, expect, it, vi } from "vitest";

import {
  DashboardState,
  bannerVisible,
  gaugeText,
  renderDashboard,
} from "../src/dashboard.js";
import { startPolling } from "../src/poller.js";
import type { RiskSeries } from "../src/types.js";

function series(triggered: boolean, phiS: number): RiskSeries {
  return {
    series: [
      { frame_id: "f0", flr: 0.1 },
      { frame_id: "f1", flr: triggered ? 0.9 : 0.2 },
    ],
    phi_s: phiS,
    epsilon: 0.3,
    window: 30,
    threshold: 0.5,
    triggered,
    bundle_version: 1,
  };
}

function elements() {
  const button = () => document.createElement("button");
  return {
    banner: document.createElement("div"),
    gauge: document.createElement("div"),
    chart: document.createElement("canvas"),
    version: document.createElement("span"),
    staleIndicator: document.createElement("div"),
    openBatchButton: button(),
    updateButton: button(),
    jobStatus: document.createElement("div"),
  };
}

describe("risk dashboard", () => {
  it("hides the banner while the series stays below threshold", () => {
    const el = elements();
    const state: DashboardState = {
      series: series(false, 0.1),
      stale: false,
      updating: false,
      lastError: null,
    };
    renderDashboard(el, state);
    expect(el.banner.classList.contains("hidden")).toBe(true);
    expect(el.openBatchButton.disabled).toBe(true);
    expect(el.version.textContent).toBe("model v1");
    expect(gaugeText(state.series!)).toContain("10.0%");
  });

  it("shows the banner within one polling interval of a scripted trigger", async () => {
    vi.useFakeTimers();
    try {
      const el = elements();
      const state: DashboardState = {
        series: null,
        stale: false,
        updating: false,
        lastError: null,
      };
      const scripted = [series(false, 0.2), series(true, 0.6)];
      let polls = 0;
      const poller = startPolling(
        async () => {
          state.series = scripted[Math.min(polls, scripted.length - 1)];
          polls += 1;
          renderDashboard(el, state);
        },
        () => undefined,
        2000,
      );
      await vi.advanceTimersByTimeAsync(0); // initial tick: quiet series
      expect(polls).toBe(1);
      expect(el.banner.classList.contains("hidden")).toBe(true);

      await vi.advanceTimersByTimeAsync(2000); // one polling interval later
      expect(polls).toBe(2);
      expect(bannerVisible(state)).toBe(true);
      expect(el.banner.classList.contains("hidden")).toBe(false);
      expect(el.openBatchButton.disabled).toBe(false);
      poller.stop();
    } finally {
      vi.useRealTimers();
    }
  });

  it("marks data stale when a poll fails and recovers on success", async () => {
    const el = elements();
    const state: DashboardState = {
      series: series(false, 0.2),
      stale: false,
      updating: false,
      lastError: null,
    };
    let fail = true;
    const poller = startPolling(
      async () => {
        if (fail) throw new Error("backend away");
        state.stale = false;
        state.lastError = null;
        renderDashboard(el, state);
      },
      (err) => {
        state.stale = true;
        state.lastError = err instanceof Error ? err.message : String(err);
        renderDashboard(el, state);
      },
      100_000,
    );
    await poller.tick();
    expect(el.staleIndicator.classList.contains("hidden")).toBe(false);
    expect(el.staleIndicator.textContent).toContain("backend away");
    fail = false;
    await poller.tick();
    expect(el.staleIndicator.classList.contains("hidden")).toBe(true);
    poller.stop();
  });
});
