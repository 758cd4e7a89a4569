// Console shell: dashboard on top, queue on the left, editor on the right.

import { AnnotationEditor } from "./annotate.js";
import { ApiClient } from "./api.js";
import { DashboardState, renderDashboard } from "./dashboard.js";
import { startPolling } from "./poller.js";
import { renderQueue } from "./queue.js";
import type { AnnotationRequest } from "./types.js";

const POLL_INTERVAL_MS = 2000;

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

export function startApp(api: ApiClient = new ApiClient()): void {
  const dashboardEls = {
    banner: byId("trigger-banner"),
    gauge: byId("gauge"),
    chart: byId<HTMLCanvasElement>("flr-chart"),
    version: byId("version-badge"),
    staleIndicator: byId("stale-indicator"),
    openBatchButton: byId<HTMLButtonElement>("open-batch"),
    updateButton: byId<HTMLButtonElement>("update-model"),
    jobStatus: byId("job-status"),
  };
  const queueRoot = byId("queue");
  const toast = byId("toast");

  const editor = new AnnotationEditor(
    {
      container: byId("editor"),
      canvas: byId<HTMLCanvasElement>("editor-canvas"),
      frameLabel: byId("editor-frame"),
      labelLegend: byId("label-legend"),
      hint: byId("submit-hint"),
      submitButton: byId<HTMLButtonElement>("submit-annotations"),
      undoButton: byId<HTMLButtonElement>("undo-rect"),
      riskToggle: byId<HTMLInputElement>("toggle-risk"),
      segToggle: byId<HTMLInputElement>("toggle-seg"),
    },
    api,
    window.localStorage,
    () => {
      showToast("annotations submitted");
      void refresh();
    },
    (message) => showToast(message, true),
  );

  const state: DashboardState = {
    series: null,
    stale: false,
    updating: false,
    lastError: null,
  };

  let showToastTimer: number | undefined;
  function showToast(message: string, isError = false): void {
    toast.textContent = message;
    toast.classList.toggle("error", isError);
    toast.classList.remove("hidden");
    window.clearTimeout(showToastTimer);
    showToastTimer = window.setTimeout(() => toast.classList.add("hidden"), 4000);
  }

  async function refresh(): Promise<void> {
    const [series, queue] = await Promise.all([api.riskSeries(), api.queue()]);
    state.series = series;
    state.stale = false;
    state.lastError = null;
    renderDashboard(dashboardEls, state);
    renderQueue(queueRoot, queue, {
      imageUrl: (fid) => api.frameImageUrl(fid),
      onOpen: (req: AnnotationRequest) => void editor.open(req.frame_id),
      onSkip: (req: AnnotationRequest) =>
        void api
          .skip(req.request_id)
          .then(() => refresh())
          .catch((err) => showToast(String(err), true)),
    });
  }

  dashboardEls.openBatchButton.addEventListener("click", () => {
    void api
      .openBatch()
      .then((requests) => {
        showToast(`opened ${requests.length} annotation requests`);
        return refresh();
      })
      .catch((err) => showToast(String(err), true));
  });

  dashboardEls.updateButton.addEventListener("click", () => {
    state.updating = true;
    renderDashboard(dashboardEls, state);
    dashboardEls.jobStatus.textContent = "update running…";
    void api
      .startUpdate()
      .then(({ job_id }) => {
        const watch = window.setInterval(() => {
          void api.updateJob(job_id).then((job) => {
            if (job.status === "running") return;
            window.clearInterval(watch);
            state.updating = false;
            dashboardEls.jobStatus.textContent =
              job.status === "done"
                ? `model updated to v${job.new_version}`
                : `update failed: ${job.error}`;
            void refresh();
          });
        }, 1000);
      })
      .catch((err) => {
        state.updating = false;
        dashboardEls.jobStatus.textContent = "";
        showToast(String(err), true);
        renderDashboard(dashboardEls, state);
      });
  });

  startPolling(
    refresh,
    (err) => {
      state.stale = true;
      state.lastError = err instanceof Error ? err.message : String(err);
      renderDashboard(dashboardEls, state);
    },
    POLL_INTERVAL_MS,
  );
}

if (typeof document !== "undefined" && document.getElementById("flr-chart")) {
  startApp();
}
