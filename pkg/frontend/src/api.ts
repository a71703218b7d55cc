/** Typed client for the annotation service.
 *
 * The service exposes exactly four JSON endpoints; this module is the only
 * place that knows their paths and shapes. Everything network-shaped is
 * behind `FetchLike` so tests can substitute a scripted double without
 * touching real sockets.
 */

export interface SchemaInfo {
  task_id: string;
  class_names: string[];
  label_tokens: Record<string, string>;
  reveal_llm_label: boolean;
  description: string;
}

export interface AnnotationTask {
  doc_id: string;
  text: string;
  target: string | null;
  class_names: string[];
  lease_seconds: number;
  /** Present only when the server was started with --reveal-llm-label. */
  llm_suggestion?: string;
  llm_confidence?: number;
}

export interface Progress {
  completed: number;
  total: number;
  per_class: Record<string, number>;
  done: boolean;
}

export interface SubmitOk {
  ok: boolean;
  completed: number;
  total: number;
}

/** Structural subset of a fetch Response — all the client needs. */
export interface HttpResponse {
  status: number;
  json(): Promise<unknown>;
}

export interface HttpRequestInit {
  method?: string;
  headers?: Record<string, string>;
  body?: string;
}

export type FetchLike = (url: string, init?: HttpRequestInit) => Promise<HttpResponse>;

/** Non-2xx response other than the conflict case. */
export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
    this.name = "ApiError";
  }
}

/** 409: the task was completed elsewhere or the lease moved on. */
export class ConflictError extends ApiError {
  constructor(readonly reason: string) {
    super(`conflict: ${reason}`, 409);
    this.name = "ConflictError";
  }
}

async function errorMessage(res: HttpResponse): Promise<string> {
  try {
    const body = (await res.json()) as { error?: unknown };
    if (body && typeof body.error === "string") return body.error;
  } catch {
    /* non-JSON error body; fall through to the status line */
  }
  return `request failed with status ${res.status}`;
}

export class ApiClient {
  constructor(
    private readonly fetchImpl: FetchLike,
    private readonly base: string = "",
  ) {}

  private async getJson(path: string): Promise<unknown> {
    const res = await this.fetchImpl(this.base + path);
    if (res.status !== 200) throw new ApiError(await errorMessage(res), res.status);
    return res.json();
  }

  async schema(): Promise<SchemaInfo> {
    return (await this.getJson("/api/schema")) as SchemaInfo;
  }

  /** Next pending task leased to `annotator`, or null when the queue is empty (204). */
  async nextTask(annotator: string): Promise<AnnotationTask | null> {
    const res = await this.fetchImpl(
      `${this.base}/api/tasks/next?annotator=${encodeURIComponent(annotator)}`,
    );
    if (res.status === 204) return null;
    if (res.status !== 200) throw new ApiError(await errorMessage(res), res.status);
    return (await res.json()) as AnnotationTask;
  }

  async submitLabel(docId: string, annotator: string, className: string): Promise<SubmitOk> {
    const res = await this.fetchImpl(
      `${this.base}/api/tasks/${encodeURIComponent(docId)}/label`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ annotator, class_name: className }),
      },
    );
    if (res.status === 409) {
      const body = (await res.json()) as { reason?: unknown };
      const reason = typeof body.reason === "string" ? body.reason : "conflict";
      throw new ConflictError(reason);
    }
    if (res.status !== 200) throw new ApiError(await errorMessage(res), res.status);
    return (await res.json()) as SubmitOk;
  }

  async progress(): Promise<Progress> {
    return (await this.getJson("/api/progress")) as Progress;
  }
}
