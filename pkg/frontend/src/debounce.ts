// Trailing-edge debounce: rapid schedule() calls collapse into one firing.

export class Debouncer {
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(private delayMs: number) {}

  schedule(fn: () => void): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
    }
    this.timer = setTimeout(() => {
      this.timer = null;
      fn();
    }, this.delayMs);
  }

  cancel(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }

  get pending(): boolean {
    return this.timer !== null;
  }
}

// Keeps at most one request in flight; while busy, only the latest queued
// task survives and runs after the current one settles.
export class SingleFlight {
  private inFlight = false;
  private queued: (() => Promise<void>) | null = null;

  get busy(): boolean {
    return this.inFlight;
  }

  async run(task: () => Promise<void>): Promise<void> {
    if (this.inFlight) {
      this.queued = task;
      return;
    }
    this.inFlight = true;
    try {
      await task();
    } finally {
      this.inFlight = false;
      const next = this.queued;
      this.queued = null;
      if (next !== null) {
        void this.run(next);
      }
    }
  }
}
