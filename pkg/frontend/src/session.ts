import { HttpError, isTransient, type ApiClient } from "./api.js";
import { isDistinctFromOriginal, placeWindow } from "./onset.js";
import type { Outbox } from "./outbox.js";
import type { Outcome, SourceInfo, VerdictBody } from "./types.js";

export const PAGE_SIZE = 25;

export interface CellState {
  clipId: string;
  opened: boolean; // audio or spectrogram has been viewed
  outcome: Outcome | null;
  buffered: boolean; // verdict sits in the offline outbox
}

export interface JudgeResult {
  submitted: boolean;
  buffered: boolean;
}

export interface OnsetContext {
  clipId: string;
  durationS: number;
  originalStartS: number;
  placedStartS: number;
}

/**
 * One auditor's pass over a plan: page of cells, submission guards,
 * optimistic advance, offline buffering.
 *
 * Invariants enforced here rather than in the DOM layer:
 *  - a verdict needs the clip opened (listened or spectrogram viewed) first;
 *  - wrong_onset flows through the onset editor and must move the window.
 */
export class AuditSession {
  private cells = new Map<string, CellState>();
  private clipIds: string[] = [];

  constructor(
    private readonly api: ApiClient,
    private readonly outbox: Outbox,
    readonly auditor: string = "",
    readonly pageSize: number = PAGE_SIZE,
  ) {}

  async load(): Promise<void> {
    const plan = await this.api.plan();
    this.clipIds = [...plan.sampled_clip_ids];
    this.cells.clear();
    for (const clipId of this.clipIds) {
      this.cells.set(clipId, { clipId, opened: false, outcome: null, buffered: false });
    }
    for (const queued of this.outbox.pending()) {
      const cell = this.cells.get(queued.clip_id);
      if (cell) {
        cell.outcome = queued.outcome;
        cell.buffered = true;
      }
    }
  }

  get total(): number {
    return this.clipIds.length;
  }

  get pageCount(): number {
    return Math.ceil(this.clipIds.length / this.pageSize);
  }

  page(index: number): CellState[] {
    return this.clipIds
      .slice(index * this.pageSize, (index + 1) * this.pageSize)
      .map((id) => this.cell(id));
  }

  cell(clipId: string): CellState {
    const cell = this.cells.get(clipId);
    if (!cell) throw new Error(`unknown clip ${clipId}`);
    return cell;
  }

  judgedCount(): number {
    let n = 0;
    for (const cell of this.cells.values()) if (cell.outcome !== null) n += 1;
    return n;
  }

  /** First page holding an unjudged cell; pages auto-advance once full. */
  currentPage(): number {
    for (let i = 0; i < this.clipIds.length; i += 1) {
      if (this.cell(this.clipIds[i]).outcome === null) {
        return Math.floor(i / this.pageSize);
      }
    }
    return Math.max(this.pageCount - 1, 0);
  }

  isPageComplete(index: number): boolean {
    const cells = this.page(index);
    return cells.length > 0 && cells.every((c) => c.outcome !== null);
  }

  /** Mark the clip as inspected (spectrogram shown or audio played). */
  openClip(clipId: string): void {
    this.cell(clipId).opened = true;
  }

  /** Direct verdicts; wrong_onset must go through submitOnsetCorrection. */
  async judge(clipId: string, outcome: Outcome): Promise<JudgeResult> {
    if (outcome === "wrong_onset") {
      throw new Error("wrong_onset requires an onset correction");
    }
    return this.submit({ clip_id: clipId, outcome, auditor: this.auditor });
  }

  async beginOnsetCorrection(clipId: string): Promise<OnsetContext> {
    this.guard(clipId);
    const info: SourceInfo = await this.api.sourceInfo(clipId);
    return {
      clipId,
      durationS: info.duration_s,
      originalStartS: info.start_s,
      placedStartS: info.start_s,
    };
  }

  /** Drop the dragged window; returns the snapped, clamped placement. */
  placeOnset(context: OnsetContext, rawStartS: number): OnsetContext {
    return { ...context, placedStartS: placeWindow(rawStartS, context.durationS) };
  }

  async submitOnsetCorrection(context: OnsetContext): Promise<JudgeResult> {
    if (!isDistinctFromOriginal(context.placedStartS, context.originalStartS)) {
      throw new Error("corrected window must differ from the original start");
    }
    return this.submit({
      clip_id: context.clipId,
      outcome: "wrong_onset",
      corrected_start_s: context.placedStartS,
      auditor: this.auditor,
    });
  }

  /** Retry buffered verdicts (call on reconnect). */
  async flushOutbox(): Promise<number> {
    const sent = await this.outbox.flush((v) => this.api.postVerdict(v), isTransient);
    const stillQueued = new Set(this.outbox.pending().map((v) => v.clip_id));
    for (const cell of this.cells.values()) {
      if (cell.buffered && !stillQueued.has(cell.clipId)) cell.buffered = false;
    }
    return sent;
  }

  private guard(clipId: string): CellState {
    const cell = this.cell(clipId);
    if (!cell.opened) {
      throw new Error(`judge ${clipId} before opening its audio or spectrogram`);
    }
    if (cell.outcome !== null) {
      throw new Error(`${clipId} already judged`);
    }
    return cell;
  }

  private async submit(body: VerdictBody): Promise<JudgeResult> {
    const cell = this.guard(body.clip_id);
    cell.outcome = body.outcome; // optimistic advance
    try {
      await this.api.postVerdict(body);
      return { submitted: true, buffered: false };
    } catch (err) {
      if (err instanceof HttpError && err.status === 409) {
        // the service already holds a verdict for this clip; nothing to queue
        return { submitted: true, buffered: false };
      }
      if (!isTransient(err)) {
        cell.outcome = null; // permanent rejection: undo the optimistic state
        throw err;
      }
      cell.buffered = true;
      this.outbox.add(body);
      return { submitted: false, buffered: true };
    }
  }
}
