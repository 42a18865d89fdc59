import type { VerdictBody } from "./types.js";

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

const DEFAULT_KEY = "audit-verdict-outbox";

/**
 * Durable buffer for verdicts that could not reach the service.
 *
 * Every add persists synchronously, so a reload (new Outbox over the same
 * storage) loses nothing; flush re-posts in order and keeps whatever still
 * fails.
 */
export class Outbox {
  constructor(
    private readonly storage: StorageLike,
    private readonly key: string = DEFAULT_KEY,
  ) {}

  pending(): VerdictBody[] {
    const raw = this.storage.getItem(this.key);
    if (!raw) return [];
    try {
      return JSON.parse(raw) as VerdictBody[];
    } catch {
      return [];
    }
  }

  add(verdict: VerdictBody): void {
    const queue = this.pending();
    queue.push(verdict);
    this.storage.setItem(this.key, JSON.stringify(queue));
  }

  size(): number {
    return this.pending().length;
  }

  /** Re-post buffered verdicts in order; returns how many got through.

      retain decides whether a failed verdict stays queued (default: always);
      permanently rejected verdicts (retain -> false) are dropped so the
      queue cannot jam. */
  async flush(
    post: (v: VerdictBody) => Promise<unknown>,
    retain: (err: unknown) => boolean = () => true,
  ): Promise<number> {
    const queue = this.pending();
    const remaining: VerdictBody[] = [];
    let sent = 0;
    let stalled = false;
    for (const verdict of queue) {
      if (stalled) {
        remaining.push(verdict); // keep order once something failed
        continue;
      }
      try {
        await post(verdict);
        sent += 1;
      } catch (err) {
        if (retain(err)) {
          remaining.push(verdict);
          stalled = true;
        }
        // dropped otherwise: the service refused it for good
      }
    }
    if (remaining.length > 0) {
      this.storage.setItem(this.key, JSON.stringify(remaining));
    } else {
      this.storage.removeItem(this.key);
    }
    return sent;
  }
}
