// Pending-request list: highest frame risk first, then stream order.

import type { AnnotationRequest } from "./types.js";

export function sortQueue(requests: AnnotationRequest[]): AnnotationRequest[] {
  return [...requests].sort(
    (a, b) => b.frame_risk - a.frame_risk || a.sequence_index - b.sequence_index,
  );
}

export function ageLabel(createdAt: number, now: number): string {
  const seconds = Math.max(0, now - createdAt);
  if (seconds < 90) return `${Math.round(seconds)}s ago`;
  if (seconds < 5400) return `${Math.round(seconds / 60)}m ago`;
  return `${Math.round(seconds / 3600)}h ago`;
}

export interface QueueCallbacks {
  onOpen: (request: AnnotationRequest) => void;
  onSkip: (request: AnnotationRequest) => void;
  imageUrl: (frameId: string) => string;
}

export function renderQueue(
  root: HTMLElement,
  requests: AnnotationRequest[],
  callbacks: QueueCallbacks,
  now: number = Date.now() / 1000,
): void {
  root.textContent = "";
  const sorted = sortQueue(requests);
  if (sorted.length === 0) {
    const empty = document.createElement("div");
    empty.className = "queue-empty";
    empty.textContent = "Queue is empty — waiting for the next trigger.";
    root.appendChild(empty);
    return;
  }
  for (const req of sorted) {
    const card = document.createElement("div");
    card.className = "queue-card";
    card.dataset.requestId = req.request_id;

    const thumb = document.createElement("img");
    thumb.className = "queue-thumb";
    thumb.src = callbacks.imageUrl(req.frame_id);
    thumb.alt = req.frame_id;
    card.appendChild(thumb);

    const meta = document.createElement("div");
    meta.className = "queue-meta";
    meta.innerHTML =
      `<span class="queue-frame">${req.frame_id}</span>` +
      `<span class="queue-risk">FLR ${(req.frame_risk * 100).toFixed(0)}%</span>` +
      `<span class="queue-age">${ageLabel(req.created_at, now)}</span>`;
    card.appendChild(meta);

    const annotate = document.createElement("button");
    annotate.textContent = "annotate";
    annotate.addEventListener("click", () => callbacks.onOpen(req));
    card.appendChild(annotate);

    const skip = document.createElement("button");
    skip.className = "ghost";
    skip.textContent = "skip";
    skip.addEventListener("click", () => callbacks.onSkip(req));
    card.appendChild(skip);

    root.appendChild(card);
  }
}
