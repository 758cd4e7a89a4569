// Annotation draft: rectangles with per-image group labels. Pure state so
// the rules (undo, label cycling, submittability) are unit-testable; the
// canvas layer only renders it.

import type { AnnotationPayload } from "./types.js";

export const LABEL_COLORS = [
  "#e6553f", "#3fa7e6", "#58c26a", "#e0b23f", "#a06fe0",
  "#e06fb0", "#5fd6c9", "#b0b43f", "#8a8f98", "#d98a5f",
];

export interface DraftRect {
  cx: number;
  cy: number;
  w: number;
  h: number;
  group_label: number;
  color: string;
}

export interface Draft {
  frame_id: string;
  rectangles: DraftRect[];
  dirty: boolean;
}

export function newDraft(frameId: string): Draft {
  return { frame_id: frameId, rectangles: [], dirty: false };
}

export function addRect(
  draft: Draft, cx: number, cy: number, w: number, h: number, label: number,
): Draft {
  const rect: DraftRect = {
    cx: Math.round(cx * 100) / 100,
    cy: Math.round(cy * 100) / 100,
    w: Math.max(1, Math.round(w)),
    h: Math.max(1, Math.round(h)),
    group_label: label,
    color: LABEL_COLORS[label % LABEL_COLORS.length],
  };
  return { ...draft, rectangles: [...draft.rectangles, rect], dirty: true };
}

export function undo(draft: Draft): Draft {
  if (draft.rectangles.length === 0) return draft;
  return { ...draft, rectangles: draft.rectangles.slice(0, -1), dirty: true };
}

export function clear(draft: Draft): Draft {
  return { ...draft, rectangles: [], dirty: draft.rectangles.length > 0 };
}

export function distinctLabels(draft: Draft): number[] {
  return [...new Set(draft.rectangles.map((r) => r.group_label))].sort((a, b) => a - b);
}

/** Mirrors the backend rule: contrastive training needs two groups. */
export function submittable(draft: Draft): boolean {
  return distinctLabels(draft).length >= 2;
}

export function submitHint(draft: Draft): string | null {
  if (draft.rectangles.length === 0) return "draw at least two rectangles";
  if (!submittable(draft)) return "use at least two different group labels (keys 0-9)";
  return null;
}

/** Payload in the manifest annotation schema, labels densified to 0..k-1. */
export function toPayload(draft: Draft): AnnotationPayload {
  const order = new Map(distinctLabels(draft).map((lab, i) => [lab, i]));
  return {
    frame_id: draft.frame_id,
    anchors: draft.rectangles.map((r) => ({
      cx: r.cx,
      cy: r.cy,
      w: r.w,
      h: r.h,
      label: order.get(r.group_label) ?? 0,
    })),
  };
}

const STORE_PREFIX = "actseg-draft:";

export function saveLocal(draft: Draft, storage: Storage): void {
  storage.setItem(STORE_PREFIX + draft.frame_id, JSON.stringify(draft));
}

export function loadLocal(frameId: string, storage: Storage): Draft | null {
  const raw = storage.getItem(STORE_PREFIX + frameId);
  if (!raw) return null;
  try {
    return JSON.parse(raw) as Draft;
  } catch {
    return null;
  }
}

export function dropLocal(frameId: string, storage: Storage): void {
  storage.removeItem(STORE_PREFIX + frameId);
}
