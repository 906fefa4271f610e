/** Single-task annotation screen driven by the campaign service.
 *
 * One task is active at a time and at most one submission is in flight;
 * acknowledgements are matched against a sequence number so a stale
 * response can never overwrite newer state. Every submission carries an
 * idempotency key that is kept until the service accepts it, which makes
 * double-clicks and transport retries safe.
 */

import {
  Ack,
  ApiError,
  CampaignApi,
  Stats,
  Submission,
  Task,
  TransportFailure,
} from "./api.js";
import { Draft, emptyDraft, validateDraft, wordCount, OTHER_TAG_ID } from "./validation.js";

export type Screen = "loading" | "task" | "done" | "excluded";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function newIdempotencyKey(): string {
  if (typeof crypto !== "undefined" && "randomUUID" in crypto) {
    return crypto.randomUUID();
  }
  return `key-${Date.now()}-${Math.random().toString(16).slice(2)}`;
}

export class AnnotatorApp {
  private annotatorId: string | null = null;
  private task: Task | null = null;
  private draft: Draft = emptyDraft();
  private idempotencyKey = newIdempotencyKey();
  private submitSeq = 0;
  private inFlight = false;
  private busy = 0;
  private lastAck: Ack | null = null;
  private lastStats: Stats | null = null;
  screen: Screen = "loading";

  constructor(
    private readonly root: HTMLElement,
    private readonly api: CampaignApi,
    private readonly campaignId: string,
  ) {}

  get annotator(): string | null {
    return this.annotatorId;
  }

  /** Register a fresh annotator session and load the first task. */
  async start(): Promise<void> {
    await this.track(async () => {
      this.annotatorId = await this.api.register(this.campaignId);
      await this.loadNext();
    });
  }

  /** Resolves once no network call or render is pending. */
  async whenIdle(): Promise<void> {
    while (this.busy > 0) {
      await new Promise((resolve) => setTimeout(resolve, 5));
    }
  }

  private async track(work: () => Promise<void>): Promise<void> {
    this.busy += 1;
    try {
      await work();
    } finally {
      this.busy -= 1;
    }
  }

  private async loadNext(): Promise<void> {
    if (this.annotatorId === null) throw new Error("start() must run first");
    let payload;
    try {
      payload = await this.api.loadNext(this.campaignId, this.annotatorId);
    } catch (error) {
      if (error instanceof ApiError && error.excluded) {
        this.renderExcluded();
        return;
      }
      throw error;
    }
    if (payload.done) {
      this.lastStats = await this.api.stats(this.campaignId, this.annotatorId);
      this.renderDone(payload.n_submitted);
      return;
    }
    this.task = payload;
    this.draft = emptyDraft();
    this.idempotencyKey = newIdempotencyKey();
    this.renderTask();
  }

  private submission(): Submission {
    if (this.annotatorId === null || this.task === null || this.draft.decision === null) {
      throw new Error("submission composed without an active task");
    }
    return {
      annotator_id: this.annotatorId,
      sample_id: this.task.sample_id,
      decision: this.draft.decision,
      reasons: [...this.draft.reasons].sort((a, b) => a - b),
      other_text: this.draft.otherText.trim().length > 0 ? this.draft.otherText.trim() : null,
      comment: this.draft.comment,
      idempotency_key: this.idempotencyKey,
    };
  }

  private async submit(): Promise<void> {
    if (this.inFlight || this.task === null || this.annotatorId === null) return;
    const issues = validateDraft(this.draft, this.task.min_comment_words);
    if (issues.length > 0) {
      this.renderIssues(issues.map((issue) => issue.message));
      return;
    }
    this.inFlight = true;
    this.submitSeq += 1;
    const seq = this.submitSeq;
    this.setSubmitEnabled(false);
    try {
      const ack = await this.api.submit(this.campaignId, this.submission());
      if (seq !== this.submitSeq) return; // stale acknowledgement
      this.lastAck = ack;
      this.lastStats = await this.api.stats(this.campaignId, this.annotatorId);
      if (ack.status === "excluded") {
        this.renderExcluded();
        return;
      }
      await this.loadNext();
    } catch (error) {
      this.inFlight = false;
      if (error instanceof TransportFailure) {
        // same idempotency key on retry, so the service stores at most one
        this.renderBanner(
          "retry",
          "Could not reach the campaign service. Check your connection and submit again.",
        );
      } else if (error instanceof ApiError && error.excluded) {
        this.renderExcluded();
        return;
      } else if (error instanceof ApiError && error.validation) {
        this.renderIssues([error.message]);
      } else {
        this.renderBanner("error", error instanceof Error ? error.message : String(error));
      }
      this.refreshSubmitState();
    } finally {
      this.inFlight = false;
    }
  }

  // -- rendering -----------------------------------------------------------

  private clear(): void {
    this.root.textContent = "";
  }

  private renderTask(): void {
    const task = this.task;
    if (task === null) return;
    this.screen = "task";
    this.clear();

    const header = el("header");
    header.appendChild(el("h1", "question", task.question));
    header.appendChild(
      el("p", "progress", `Sample ${task.position} of ${task.total}`),
    );
    this.root.appendChild(header);
    this.root.appendChild(this.feedbackStrip());

    const banner = el("div", "banner");
    banner.id = "banner";
    banner.hidden = true;
    this.root.appendChild(banner);

    const audio = el("audio");
    audio.id = "player";
    audio.controls = true;
    audio.src = this.api.audioUrl(task);
    this.root.appendChild(audio);

    const form = el("form");
    form.id = "task-form";
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.track(() => this.submit());
    });

    form.appendChild(this.decisionToggle());
    form.appendChild(this.reasonList(task));

    const commentLabel = el("label", undefined, "What did you hear?");
    commentLabel.htmlFor = "comment";
    form.appendChild(commentLabel);
    const comment = el("textarea");
    comment.id = "comment";
    comment.rows = 3;
    comment.placeholder = `At least ${task.min_comment_words} words`;
    comment.addEventListener("input", () => {
      this.draft.comment = comment.value;
      this.refreshSubmitState();
    });
    form.appendChild(comment);

    const issues = el("ul", "issues");
    issues.id = "issues";
    form.appendChild(issues);

    const submit = el("button", undefined, "Submit");
    submit.id = "submit";
    submit.type = "submit";
    submit.disabled = true;
    form.appendChild(submit);

    this.root.appendChild(form);
  }

  private decisionToggle(): HTMLElement {
    const wrap = el("fieldset", "decision");
    wrap.appendChild(el("legend", undefined, "Your decision"));
    for (const [value, label] of [
      ["genuine", "Genuine"],
      ["artificial", "Artificial"],
    ] as const) {
      const lab = el("label");
      const radio = el("input");
      radio.type = "radio";
      radio.name = "decision";
      radio.id = `decision-${value}`;
      radio.value = value;
      radio.addEventListener("change", () => {
        this.draft.decision = value;
        if (value === "genuine") {
          this.draft.reasons = [];
          this.draft.otherText = "";
        }
        this.refreshReasonState();
        this.refreshSubmitState();
      });
      lab.appendChild(radio);
      lab.appendChild(document.createTextNode(label));
      wrap.appendChild(lab);
    }
    return wrap;
  }

  private reasonList(task: Task): HTMLElement {
    const wrap = el("fieldset", "reasons");
    wrap.id = "reasons";
    wrap.appendChild(
      el("legend", undefined, "Why does it sound artificial? (pick all that apply)"),
    );
    for (const reason of task.reasons) {
      const lab = el("label");
      const box = el("input");
      box.type = "checkbox";
      box.id = `reason-${reason.id}`;
      box.value = String(reason.id);
      box.addEventListener("change", () => {
        const selected = new Set(this.draft.reasons);
        if (box.checked) {
          selected.add(reason.id);
        } else {
          selected.delete(reason.id);
        }
        this.draft.reasons = [...selected];
        this.refreshReasonState();
        this.refreshSubmitState();
      });
      lab.appendChild(box);
      lab.appendChild(document.createTextNode(`${reason.id}. ${reason.name}`));
      wrap.appendChild(lab);
      if (reason.id === OTHER_TAG_ID) {
        const other = el("input");
        other.type = "text";
        other.id = "other-text";
        other.placeholder = "Describe the artifact";
        other.addEventListener("input", () => {
          this.draft.otherText = other.value;
          this.refreshSubmitState();
        });
        wrap.appendChild(other);
      }
    }
    this.applyReasonState(wrap);
    return wrap;
  }

  /** Reasons only apply to Artificial; the list stays hidden and inert
   * until that decision is made. */
  private applyReasonState(wrap: HTMLElement): void {
    const artificial = this.draft.decision === "artificial";
    wrap.hidden = !artificial;
    for (const input of wrap.querySelectorAll("input")) {
      (input as HTMLInputElement).disabled = !artificial;
      if (!artificial) {
        const box = input as HTMLInputElement;
        if (box.type === "checkbox") box.checked = false;
        if (box.type === "text") box.value = "";
      }
    }
  }

  private refreshReasonState(): void {
    const wrap = this.root.querySelector<HTMLElement>("#reasons");
    if (wrap) this.applyReasonState(wrap);
  }

  private refreshSubmitState(): void {
    if (this.task === null) return;
    const valid = validateDraft(this.draft, this.task.min_comment_words).length === 0;
    this.setSubmitEnabled(valid && !this.inFlight);
    if (valid) this.renderIssues([]);
  }

  private setSubmitEnabled(enabled: boolean): void {
    const submit = this.root.querySelector<HTMLButtonElement>("#submit");
    if (submit) submit.disabled = !enabled;
  }

  private renderIssues(messages: string[]): void {
    const list = this.root.querySelector<HTMLUListElement>("#issues");
    if (!list) return;
    list.textContent = "";
    for (const message of messages) {
      list.appendChild(el("li", "issue", message));
    }
  }

  private renderBanner(kind: string, message: string): void {
    const banner = this.root.querySelector<HTMLElement>("#banner");
    if (!banner) return;
    banner.hidden = false;
    banner.dataset.kind = kind;
    banner.textContent = message;
  }

  /** Accuracy, status, progress, and fee, straight from service payloads;
   * nothing here is computed client-side. */
  private feedbackStrip(): HTMLElement {
    const strip = el("section", "feedback");
    strip.id = "feedback";
    const ack = this.lastAck;
    const stats = this.lastStats;
    if (ack === null || stats === null) {
      strip.appendChild(el("p", undefined, "No submissions yet."));
      return strip;
    }
    const accuracy =
      ack.rolling_accuracy === null
        ? "n/a (fresh window)"
        : `${(ack.rolling_accuracy * 100).toFixed(0)}%`;
    strip.appendChild(el("p", "accuracy", `Rolling accuracy: ${accuracy}`));
    strip.appendChild(el("p", "completed", `Completed: ${ack.n_submitted}`));
    strip.appendChild(el("p", "fee", `Earned: ${stats.fee.toFixed(2)}`));
    const status = el("p", "status", `Status: ${ack.status}`);
    status.id = "status";
    status.dataset.status = ack.status;
    strip.appendChild(status);
    if (ack.status === "retraining") {
      const warning = el(
        "div",
        "banner",
        "Your recent accuracy dropped below the campaign floor. " +
          "Take extra care: another low stretch ends your participation.",
      );
      warning.id = "retraining-banner";
      warning.dataset.kind = "retraining";
      strip.appendChild(warning);
    }
    return strip;
  }

  private renderDone(submitted: number): void {
    this.screen = "done";
    this.task = null;
    this.clear();
    const panel = el("section", "done");
    panel.id = "done";
    panel.appendChild(el("h1", undefined, "Campaign complete"));
    panel.appendChild(el("p", undefined, `You annotated ${submitted} samples. Thank you!`));
    const stats = this.lastStats;
    if (stats) {
      const accuracy =
        stats.lifetime_accuracy === null
          ? "n/a"
          : `${(stats.lifetime_accuracy * 100).toFixed(1)}%`;
      panel.appendChild(el("p", "accuracy", `Overall accuracy: ${accuracy}`));
      panel.appendChild(el("p", "fee", `Earned: ${stats.fee.toFixed(2)}`));
    }
    this.root.appendChild(panel);
  }

  private renderExcluded(): void {
    this.screen = "excluded";
    this.task = null;
    this.clear();
    const panel = el("section", "excluded");
    panel.id = "excluded";
    panel.dataset.kind = "excluded";
    panel.appendChild(el("h1", undefined, "Participation ended"));
    panel.appendChild(
      el(
        "p",
        undefined,
        "Your accuracy stayed below the campaign requirement after retraining, " +
          "so no further tasks can be submitted in this campaign.",
      ),
    );
    this.root.appendChild(panel);
  }
}

export async function mountApp(
  root: HTMLElement,
  api: CampaignApi,
  campaignId: string,
): Promise<AnnotatorApp> {
  const app = new AnnotatorApp(root, api, campaignId);
  await app.start();
  return app;
}
