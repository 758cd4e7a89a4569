// @vitest-environment jsdom

import { describe, expect, it } from "vitest";

import { ageLabel, renderQueue, sortQueue } from "../src/queue.js";
import type { AnnotationRequest } from "../src/types.js";

function req(id: string, risk: number, seq = 0): AnnotationRequest {
  return {
    request_id: id,
    frame_id: `frame-${id}`,
    frame_risk: risk,
    sequence_index: seq,
    status: "pending",
    created_at: 1000,
  };
}

describe("queue view", () => {
  it("sorts by frame risk descending", () => {
    const sorted = sortQueue([req("a", 0.9), req("b", 0.3), req("c", 0.7)]);
    expect(sorted.map((r) => r.frame_risk)).toEqual([0.9, 0.7, 0.3]);
  });

  it("breaks risk ties by stream order", () => {
    const sorted = sortQueue([req("a", 0.5, 9), req("b", 0.5, 2)]);
    expect(sorted.map((r) => r.request_id)).toEqual(["b", "a"]);
  });

  it("renders an empty state", () => {
    const root = document.createElement("div");
    renderQueue(root, [], {
      onOpen: () => undefined,
      onSkip: () => undefined,
      imageUrl: (fid) => `/img/${fid}`,
    });
    expect(root.querySelector(".queue-empty")).not.toBeNull();
  });

  it("renders cards with risk, age and actions", () => {
    const root = document.createElement("div");
    const opened: string[] = [];
    const skipped: string[] = [];
    renderQueue(
      root,
      [req("a", 0.9), req("b", 0.7)],
      {
        onOpen: (r) => opened.push(r.request_id),
        onSkip: (r) => skipped.push(r.request_id),
        imageUrl: (fid) => `/img/${fid}`,
      },
      1060,
    );
    const cards = [...root.querySelectorAll(".queue-card")];
    expect(cards).toHaveLength(2);
    expect(cards[0].textContent).toContain("FLR 90%");
    expect(cards[0].textContent).toContain("60s ago");
    (cards[0].querySelectorAll("button")[0] as HTMLButtonElement).click();
    (cards[1].querySelectorAll("button")[1] as HTMLButtonElement).click();
    expect(opened).toEqual(["a"]);
    expect(skipped).toEqual(["b"]);
  });

  it("a request resolved elsewhere disappears on the next render", () => {
    const root = document.createElement("div");
    const callbacks = {
      onOpen: () => undefined,
      onSkip: () => undefined,
      imageUrl: (fid: string) => `/img/${fid}`,
    };
    renderQueue(root, [req("a", 0.9), req("b", 0.7)], callbacks);
    expect(root.querySelectorAll(".queue-card")).toHaveLength(2);
    renderQueue(root, [req("b", 0.7)], callbacks);
    expect(root.querySelectorAll(".queue-card")).toHaveLength(1);
    expect(root.textContent).toContain("frame-b");
  });

  it("formats ages", () => {
    expect(ageLabel(0, 45)).toBe("45s ago");
    expect(ageLabel(0, 600)).toBe("10m ago");
    expect(ageLabel(0, 7200)).toBe("2h ago");
  });
});
