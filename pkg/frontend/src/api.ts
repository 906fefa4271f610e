/** Typed client for the campaign service HTTP interface.
 *
 * The client speaks only the documented endpoints and never sees
 * ground-truth labels; everything it knows about a sample comes from the
 * task payload.
 */

export type Decision = "genuine" | "artificial";
export type AnnotatorStatus = "active" | "retraining" | "excluded";

export interface ReasonOption {
  id: number;
  name: string;
}

export interface Task {
  done: false;
  sample_id: string;
  audio_url: string;
  question: string;
  reasons: ReasonOption[];
  position: number;
  total: number;
  min_comment_words: number;
}

export interface DoneView {
  done: true;
  n_submitted: number;
}

export type NextPayload = Task | DoneView;

export interface Ack {
  accepted: boolean;
  sample_id: string;
  n_submitted: number;
  rolling_accuracy: number | null;
  lifetime_accuracy: number | null;
  status: AnnotatorStatus;
}

export interface Stats {
  annotator_id: string;
  n_submitted: number;
  rolling_accuracy: number | null;
  lifetime_accuracy: number | null;
  status: AnnotatorStatus;
  fee: number;
  tier_eligible: string | null;
}

export interface Submission {
  annotator_id: string;
  sample_id: string;
  decision: Decision;
  reasons: number[];
  other_text: string | null;
  comment: string;
  idempotency_key: string;
}

interface ErrorBody {
  error?: string;
  detail?: string;
  field?: string;
  rule?: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly kind: string,
    message: string,
    readonly field?: string,
    readonly rule?: string,
  ) {
    super(message);
    this.name = "ApiError";
  }

  get excluded(): boolean {
    return this.status === 403;
  }

  get wrongTask(): boolean {
    return this.status === 409;
  }

  get validation(): boolean {
    return this.status === 422;
  }
}

/** Network-level failure (no HTTP response); submissions may be retried
 * with the same idempotency key. */
export class TransportFailure extends Error {
  constructor(cause: unknown) {
    super(cause instanceof Error ? cause.message : String(cause));
    this.name = "TransportFailure";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class CampaignApi {
  private readonly fetchFn: FetchLike;

  constructor(
    readonly baseUrl: string,
    fetchFn?: FetchLike,
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn ?? ((input, init) => globalThis.fetch(input, init));
  }

  async register(campaignId: string): Promise<string> {
    const body = await this.request(
      `/campaigns/${encodeURIComponent(campaignId)}/annotators`,
      { method: "POST" },
    );
    return (body as { annotator_id: string }).annotator_id;
  }

  async loadNext(campaignId: string, annotatorId: string): Promise<NextPayload> {
    const query = new URLSearchParams({ annotator: annotatorId });
    const body = await this.request(
      `/campaigns/${encodeURIComponent(campaignId)}/next?${query}`,
    );
    return body as NextPayload;
  }

  async submit(campaignId: string, submission: Submission): Promise<Ack> {
    const body = await this.request(
      `/campaigns/${encodeURIComponent(campaignId)}/responses`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(submission),
      },
    );
    return body as Ack;
  }

  async stats(campaignId: string, annotatorId: string): Promise<Stats> {
    const body = await this.request(
      `/campaigns/${encodeURIComponent(campaignId)}/annotators/${encodeURIComponent(annotatorId)}/stats`,
    );
    return body as Stats;
  }

  audioUrl(task: Task): string {
    return this.baseUrl + task.audio_url;
  }

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, init);
    } catch (cause) {
      throw new TransportFailure(cause);
    }
    if (!response.ok) {
      let parsed: ErrorBody = {};
      try {
        parsed = (await response.json()) as ErrorBody;
      } catch {
        // non-JSON error body; fall through with the status alone
      }
      throw new ApiError(
        response.status,
        parsed.error ?? "HttpError",
        parsed.detail ?? `request failed with status ${response.status}`,
        parsed.field,
        parsed.rule,
      );
    }
    return response.json();
  }
}
