// CI contract: payloads built by the console validate against the very
// schema file the backend enforces.

import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { addRect, newDraft, toPayload } from "../src/draft.js";
import { SchemaNode, validate } from "../src/schema.js";

const schema = JSON.parse(
  readFileSync(
    new URL("../../src/actseg/schemas/annotation_set.schema.json", import.meta.url),
    "utf-8",
  ),
) as SchemaNode;

describe("shared annotation schema", () => {
  it("accepts payloads built from drafts", () => {
    let draft = newDraft("frame-7");
    draft = addRect(draft, 31.25, 40.5, 24, 18, 3);
    draft = addRect(draft, 80, 90, 20, 20, 5);
    draft = addRect(draft, 10.01, 12.49, 9, 9, 3);
    const payload = toPayload(draft);
    expect(validate(payload, schema)).toEqual([]);
    // labels densified to contiguous ids
    expect(payload.anchors.map((a) => a.label)).toEqual([0, 1, 0]);
  });

  it("rejects structurally broken payloads", () => {
    expect(validate({ frame_id: "x" }, schema)).not.toEqual([]);
    expect(validate({ frame_id: "", anchors: [] }, schema)).not.toEqual([]);
    expect(
      validate(
        { frame_id: "x", anchors: [{ cx: 1, cy: 1, w: 0, h: 4, label: 0 }] },
        schema,
      ),
    ).not.toEqual([]);
    expect(
      validate(
        { frame_id: "x", anchors: [{ cx: 1, cy: 1, w: 4, h: 4, label: -1 }] },
        schema,
      ),
    ).not.toEqual([]);
    expect(
      validate(
        {
          frame_id: "x",
          anchors: [{ cx: 1, cy: 1, w: 4, h: 4, label: 0, extra: true }],
        },
        schema,
      ),
    ).not.toEqual([]);
    expect(
      validate(
        { frame_id: "x", anchors: [{ cx: 1, cy: 1, w: 4.5, h: 4, label: 0 }] },
        schema,
      ),
    ).not.toEqual([]);
  });

  it("accepts fractional centers but only integer sizes and labels", () => {
    const good = {
      frame_id: "x",
      anchors: [
        { cx: 1.5, cy: 2.25, w: 4, h: 4, label: 0 },
        { cx: 9, cy: 9, w: 3, h: 5, label: 1 },
      ],
    };
    expect(validate(good, schema)).toEqual([]);
  });
});
