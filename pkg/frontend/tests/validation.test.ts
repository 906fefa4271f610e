import { describe, expect, it } from "vitest";

import { emptyDraft, validateDraft, wordCount, OTHER_TAG_ID } from "../src/validation.js";
import type { Draft } from "../src/validation.js";

const COMMENT = "the pacing is uniform and the intonation never varies";

function draft(overrides: Partial<Draft>): Draft {
  return { ...emptyDraft(), comment: COMMENT, ...overrides };
}

function rules(d: Draft): string[] {
  return validateDraft(d, 5).map((issue) => `${issue.field}:${issue.rule}`);
}

describe("wordCount", () => {
  it("counts whitespace-separated words", () => {
    expect(wordCount("one two three")).toBe(3);
    expect(wordCount("  padded   out \n lines ")).toBe(3);
    expect(wordCount("")).toBe(0);
    expect(wordCount("   ")).toBe(0);
  });
});

describe("validateDraft", () => {
  it("accepts a genuine draft with a long enough comment", () => {
    expect(rules(draft({ decision: "genuine" }))).toEqual([]);
  });

  it("accepts an artificial draft with reasons", () => {
    expect(rules(draft({ decision: "artificial", reasons: [4, 9] }))).toEqual([]);
  });

  it("requires a decision", () => {
    expect(rules(draft({}))).toContain("decision:required");
  });

  it("enforces the comment floor", () => {
    const d = draft({ decision: "genuine", comment: "too short" });
    expect(rules(d)).toEqual(["comment:min_words"]);
    expect(validateDraft(d, 2)).toEqual([]);
  });

  it("forbids reasons on genuine decisions", () => {
    expect(rules(draft({ decision: "genuine", reasons: [9] }))).toEqual([
      "reasons:forbidden_for_genuine",
    ]);
  });

  it("requires at least one reason for artificial decisions", () => {
    expect(rules(draft({ decision: "artificial" }))).toEqual([
      "reasons:required_for_artificial",
    ]);
  });

  it("ties the free-text field to reason 14 in both directions", () => {
    expect(rules(draft({ decision: "artificial", reasons: [OTHER_TAG_ID] }))).toEqual([
      "other_text:required_for_other",
    ]);
    expect(
      rules(draft({ decision: "artificial", reasons: [OTHER_TAG_ID], otherText: "  " })),
    ).toEqual(["other_text:required_for_other"]);
    expect(
      rules(
        draft({ decision: "artificial", reasons: [OTHER_TAG_ID], otherText: "metallic hum" }),
      ),
    ).toEqual([]);
    expect(rules(draft({ decision: "artificial", reasons: [9], otherText: "stray" }))).toEqual([
      "other_text:requires_tag_14",
    ]);
  });

  it("reports several issues at once", () => {
    const issues = rules({ decision: null, reasons: [], otherText: "", comment: "hm" });
    expect(issues).toContain("decision:required");
    expect(issues).toContain("comment:min_words");
    expect(issues.length).toBe(2);
  });
});
