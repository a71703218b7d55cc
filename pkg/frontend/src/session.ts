/** Annotator session state machine.
 *
 * All client-side rules live here, DOM-free, so they can be tested against
 * a scripted service double:
 *
 *  - exactly one submission per displayed task (`select` is a no-op unless a
 *    task is showing — guards double clicks and repeated key presses);
 *  - 409 conflicts surface as a toast and auto-advance to the next task;
 *  - network/5xx failures during submit preserve the selection and wait for
 *    an explicit retry;
 *  - failures while fetching retry automatically with exponential backoff;
 *  - a 204 with work still outstanding (other annotators hold the remaining
 *    leases) polls until the queue drains or a task frees up.
 *
 * The server stays authoritative throughout: progress is re-read after every
 * accepted label, and the client never invents state it did not receive.
 */

import {
  AnnotationTask,
  ApiClient,
  ApiError,
  ConflictError,
  Progress,
  SchemaInfo,
} from "./api.js";

export type SessionPhase =
  | "idle"
  | "loading"
  | "task"
  | "submitting"
  | "submit-retry"
  | "fetch-retry"
  | "waiting"
  | "done";

export interface SessionView {
  phase: SessionPhase;
  schema: SchemaInfo | null;
  task: AnnotationTask | null;
  progress: Progress | null;
  /** Class index chosen when a submit failed and is awaiting retry. */
  pendingSelection: number | null;
  /** Transient notice (conflicts); cleared on the next accepted label. */
  toast: string | null;
  /** Banner text while in a retry state. */
  error: string | null;
  /** Delay before the scheduled automatic retry, if one is pending. */
  retryDelayMs: number | null;
  /** Labels accepted from this annotator during this session. */
  submittedByMe: number;
}

export type Scheduler = (fn: () => void, ms: number) => void;

export interface SessionOptions {
  api: ApiClient;
  annotator: string;
  /** Timer used for backoff and queue polling; injectable for tests. */
  schedule?: Scheduler;
  backoffBaseMs?: number;
  backoffMaxMs?: number;
  /** Poll interval while the queue is empty but not done; 0 disables. */
  waitPollMs?: number;
}

type Listener = (view: SessionView) => void;

export class AnnotatorSession {
  private readonly api: ApiClient;
  private readonly annotator: string;
  private readonly schedule: Scheduler;
  private readonly backoffBaseMs: number;
  private readonly backoffMaxMs: number;
  private readonly waitPollMs: number;

  private phase: SessionPhase = "idle";
  private schema: SchemaInfo | null = null;
  private task: AnnotationTask | null = null;
  private progress: Progress | null = null;
  private pendingSelection: number | null = null;
  private toast: string | null = null;
  private error: string | null = null;
  private retryDelayMs: number | null = null;
  private submittedByMe = 0;

  private fetchFailures = 0;
  private advancing = false;
  private stopped = false;
  private listeners: Listener[] = [];

  constructor(opts: SessionOptions) {
    this.api = opts.api;
    this.annotator = opts.annotator;
    this.schedule = opts.schedule ?? ((fn, ms) => setTimeout(fn, ms));
    this.backoffBaseMs = opts.backoffBaseMs ?? 500;
    this.backoffMaxMs = opts.backoffMaxMs ?? 8000;
    this.waitPollMs = opts.waitPollMs ?? 3000;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  get view(): SessionView {
    return {
      phase: this.phase,
      schema: this.schema,
      task: this.task,
      progress: this.progress,
      pendingSelection: this.pendingSelection,
      toast: this.toast,
      error: this.error,
      retryDelayMs: this.retryDelayMs,
      submittedByMe: this.submittedByMe,
    };
  }

  private emit(): void {
    const snapshot = this.view;
    for (const listener of this.listeners) listener(snapshot);
  }

  async start(): Promise<void> {
    if (this.phase !== "idle") return;
    this.phase = "loading";
    this.emit();
    try {
      this.schema = await this.api.schema();
    } catch (err) {
      this.enterFetchRetry(err, () => {
        this.phase = "idle";
        void this.start();
      });
      return;
    }
    await this.advance();
  }

  /** Refresh progress and show the next task (or the drained/done states). */
  private async advance(): Promise<void> {
    if (this.advancing || this.stopped) return;
    this.advancing = true;
    this.phase = "loading";
    this.task = null;
    this.emit();
    try {
      this.progress = await this.api.progress();
      const task = await this.api.nextTask(this.annotator);
      this.fetchFailures = 0;
      this.error = null;
      this.retryDelayMs = null;
      if (task !== null) {
        this.task = task;
        this.phase = "task";
      } else if (this.progress.done) {
        this.phase = "done";
      } else {
        // Every remaining task is leased to someone else; check back later.
        this.phase = "waiting";
        if (this.waitPollMs > 0) {
          this.schedule(() => void this.advance(), this.waitPollMs);
        }
      }
      this.emit();
    } catch (err) {
      this.enterFetchRetry(err, () => void this.advance());
    } finally {
      this.advancing = false;
    }
  }

  private enterFetchRetry(err: unknown, rerun: () => void): void {
    this.fetchFailures += 1;
    const delay = Math.min(
      this.backoffBaseMs * 2 ** (this.fetchFailures - 1),
      this.backoffMaxMs,
    );
    this.phase = "fetch-retry";
    this.error = `cannot reach the annotation service (${describe(err)}); retrying`;
    this.retryDelayMs = delay;
    this.retryAction = rerun;
    this.emit();
    this.schedule(() => {
      if (!this.stopped && this.phase === "fetch-retry") rerun();
    }, delay);
  }

  private retryAction: (() => void) | null = null;

  /** Label the displayed task. No-op unless a task is awaiting a selection. */
  async select(classIndex: number): Promise<void> {
    if (this.phase !== "task" || this.task === null) return;
    const names = this.schema?.class_names ?? this.task.class_names;
    if (classIndex < 0 || classIndex >= names.length) return;
    this.pendingSelection = classIndex;
    await this.submitPending();
  }

  private async submitPending(): Promise<void> {
    if (this.task === null || this.pendingSelection === null) return;
    const task = this.task;
    const names = this.schema?.class_names ?? task.class_names;
    const className = names[this.pendingSelection];
    this.phase = "submitting";
    this.error = null;
    this.emit();
    try {
      const ok = await this.api.submitLabel(task.doc_id, this.annotator, className);
      this.submittedByMe += 1;
      this.pendingSelection = null;
      this.toast = null;
      if (this.progress !== null) {
        this.progress = { ...this.progress, completed: ok.completed, total: ok.total };
        this.emit();
      }
      await this.advance();
    } catch (err) {
      if (err instanceof ConflictError) {
        // Someone else finished it or the lease moved on; nothing to retry.
        this.toast = err.reason;
        this.pendingSelection = null;
        await this.advance();
      } else if (err instanceof ApiError && err.status < 500) {
        // Definitive rejection (unknown task/class): retrying cannot help.
        this.toast = err.message;
        this.pendingSelection = null;
        await this.advance();
      } else {
        // Network failure or 5xx: keep the selection, let the user retry.
        this.phase = "submit-retry";
        this.error = `label not saved (${describe(err)})`;
        this.retryDelayMs = null;
        this.emit();
      }
    }
  }

  /** Manual retry from either retry state; also wakes the waiting poll. */
  async retryNow(): Promise<void> {
    if (this.phase === "submit-retry") {
      await this.submitPending();
    } else if (this.phase === "fetch-retry") {
      const rerun = this.retryAction;
      this.retryAction = null;
      if (rerun) rerun();
    } else if (this.phase === "waiting") {
      await this.advance();
    }
  }

  /** Stop scheduled work (page teardown / test cleanup). */
  destroy(): void {
    this.stopped = true;
    this.listeners = [];
  }
}

function describe(err: unknown): string {
  if (err instanceof Error) return err.message;
  return String(err);
}
