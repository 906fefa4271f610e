/** Client-side mirror of the service's submission rules.
 *
 * Duplicated for responsiveness only: the server re-validates everything
 * and stays authoritative. Field and rule identifiers match the service's
 * 422 payloads so server-side rejections reuse the same messages.
 */

import type { Decision } from "./api.js";

export const OTHER_TAG_ID = 14;

export interface Draft {
  decision: Decision | null;
  reasons: number[];
  otherText: string;
  comment: string;
}

export interface Issue {
  field: string;
  rule: string;
  message: string;
}

export function emptyDraft(): Draft {
  return { decision: null, reasons: [], otherText: "", comment: "" };
}

export function wordCount(text: string): number {
  return text.split(/\s+/).filter((word) => word.length > 0).length;
}

const MESSAGES: Record<string, string> = {
  "decision:required": "Choose Genuine or Artificial before submitting.",
  "comment:min_words": "Describe what you heard; the comment is too short.",
  "reasons:required_for_artificial":
    "Pick at least one reason when marking a sample Artificial.",
  "reasons:forbidden_for_genuine": "Genuine samples carry no reason tags.",
  "other_text:required_for_other": 'Reason 14 ("Other") needs a short description.',
  "other_text:requires_tag_14": "The description field belongs to reason 14.",
};

export function issueMessage(field: string, rule: string): string {
  return MESSAGES[`${field}:${rule}`] ?? `${field}: ${rule}`;
}

function issue(field: string, rule: string): Issue {
  return { field, rule, message: issueMessage(field, rule) };
}

export function validateDraft(draft: Draft, minCommentWords: number): Issue[] {
  const issues: Issue[] = [];
  if (draft.decision === null) {
    issues.push(issue("decision", "required"));
  }
  if (wordCount(draft.comment) < minCommentWords) {
    issues.push(issue("comment", "min_words"));
  }
  if (draft.decision === "genuine" && draft.reasons.length > 0) {
    issues.push(issue("reasons", "forbidden_for_genuine"));
  }
  if (draft.decision === "artificial" && draft.reasons.length === 0) {
    issues.push(issue("reasons", "required_for_artificial"));
  }
  const hasOther = draft.reasons.includes(OTHER_TAG_ID);
  if (hasOther && draft.otherText.trim().length === 0) {
    issues.push(issue("other_text", "required_for_other"));
  }
  if (!hasOther && draft.otherText.trim().length > 0) {
    issues.push(issue("other_text", "requires_tag_14"));
  }
  return issues;
}
