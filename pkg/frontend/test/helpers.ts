/** Small async utilities shared by the test suites. */

export function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

/** Poll until `cond` holds; fail loudly with `what` on timeout. */
export async function waitFor(
  cond: () => boolean,
  what: string,
  timeoutMs = 2000,
): Promise<void> {
  const start = Date.now();
  while (!cond()) {
    if (Date.now() - start > timeoutMs) {
      throw new Error(`timed out after ${timeoutMs}ms waiting for ${what}`);
    }
    await sleep(2);
  }
}

export interface ManualScheduler {
  schedule: (fn: () => void, ms: number) => void;
  /** Delays of the callbacks still queued. */
  pendingDelays(): number[];
  /** Run and remove the oldest scheduled callback. */
  fireNext(): void;
  size(): number;
}

/** Captures scheduled callbacks so tests control when timers fire. */
export function manualScheduler(): ManualScheduler {
  const queue: Array<{ fn: () => void; ms: number }> = [];
  return {
    schedule: (fn, ms) => {
      queue.push({ fn, ms });
    },
    pendingDelays: () => queue.map((item) => item.ms),
    fireNext: () => {
      const item = queue.shift();
      if (!item) throw new Error("no scheduled callback to fire");
      item.fn();
    },
    size: () => queue.length,
  };
}
