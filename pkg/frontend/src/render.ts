import type { ApiClient } from "./api.js";
import { navForKey, outcomeForKey } from "./keyboard.js";
import { windowWidthPx } from "./onset.js";
import type { AuditSession, OnsetContext } from "./session.js";

/** DOM wiring: grid of cells, focus ring, detail pane, onset drag editor. */
export class GridView {
  private pageIndex = 0;
  private focusIndex = 0;
  private onsetContext: OnsetContext | null = null;
  private audio: HTMLAudioElement | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly session: AuditSession,
    private readonly api: ApiClient,
  ) {}

  start(): void {
    this.pageIndex = this.session.currentPage();
    document.addEventListener("keydown", (event) => void this.onKey(event));
    window.addEventListener("online", () => void this.session.flushOutbox());
    this.renderPage();
  }

  private focusedClipId(): string | null {
    const cells = this.session.page(this.pageIndex);
    return cells[this.focusIndex]?.clipId ?? null;
  }

  private async onKey(event: KeyboardEvent): Promise<void> {
    if (this.onsetContext) return; // editor modal owns the keyboard
    const clipId = this.focusedClipId();
    if (!clipId) return;
    const outcome = outcomeForKey(event.key);
    if (outcome === "wrong_onset") {
      await this.openOnsetEditor(clipId);
      return;
    }
    if (outcome) {
      try {
        await this.session.judge(clipId, outcome);
      } catch (err) {
        this.setStatus(String(err));
        return;
      }
      this.advance();
      return;
    }
    const nav = navForKey(event.key);
    if (nav === "next") this.moveFocus(1);
    else if (nav === "prev") this.moveFocus(-1);
    else if (nav === "play") this.play(clipId);
    else if (nav === "open_onset") await this.openOnsetEditor(clipId);
  }

  private moveFocus(delta: number): void {
    const count = this.session.page(this.pageIndex).length;
    this.focusIndex = Math.min(Math.max(this.focusIndex + delta, 0), count - 1);
    this.renderPage();
  }

  private advance(): void {
    if (this.session.isPageComplete(this.pageIndex)
        && this.pageIndex < this.session.pageCount - 1) {
      this.pageIndex += 1;
      this.focusIndex = 0;
    } else {
      this.moveFocus(1);
      return;
    }
    this.renderPage();
  }

  private play(clipId: string): void {
    this.session.openClip(clipId);
    this.audio?.pause();
    this.audio = new Audio(this.api.audioUrl(clipId));
    void this.audio.play();
  }

  private setStatus(text: string): void {
    const bar = this.root.querySelector<HTMLElement>(".status-bar");
    if (bar) bar.textContent = text;
  }

  private renderPage(): void {
    const cells = this.session.page(this.pageIndex);
    this.root.innerHTML = "";
    const header = document.createElement("div");
    header.className = "header";
    header.textContent =
      `page ${this.pageIndex + 1}/${this.session.pageCount} - ` +
      `${this.session.judgedCount()}/${this.session.total} judged - ` +
      `keys: 1 correct, 2 wrong onset, 3 noise, 4 no bird, space play`;
    this.root.appendChild(header);

    const grid = document.createElement("div");
    grid.className = "grid";
    cells.forEach((cell, i) => {
      const div = document.createElement("div");
      div.className = "cell" + (i === this.focusIndex ? " focused" : "");
      div.dataset.clipId = cell.clipId;
      const img = document.createElement("img");
      img.src = this.api.spectrogramUrl(cell.clipId);
      img.alt = cell.clipId;
      img.addEventListener("load", () => this.session.openClip(cell.clipId));
      div.appendChild(img);
      const label = document.createElement("span");
      label.textContent = cell.outcome
        ? `${cell.clipId} [${cell.outcome}${cell.buffered ? ", queued" : ""}]`
        : cell.clipId;
      div.appendChild(label);
      div.addEventListener("click", () => {
        this.focusIndex = i;
        this.play(cell.clipId);
        this.renderPage();
      });
      grid.appendChild(div);
    });
    this.root.appendChild(grid);

    const status = document.createElement("div");
    status.className = "status-bar";
    this.root.appendChild(status);
  }

  private async openOnsetEditor(clipId: string): Promise<void> {
    try {
      this.onsetContext = await this.session.beginOnsetCorrection(clipId);
    } catch (err) {
      this.setStatus(String(err));
      return;
    }
    const overlay = document.createElement("div");
    overlay.className = "onset-overlay";
    const img = document.createElement("img");
    img.src = this.api.sourceSpectrogramUrl(clipId);
    img.className = "source-spectrogram";
    overlay.appendChild(img);
    const windowBox = document.createElement("div");
    windowBox.className = "onset-window";
    overlay.appendChild(windowBox);
    const hint = document.createElement("div");
    hint.className = "onset-hint";
    overlay.appendChild(hint);

    const position = () => {
      const ctx = this.onsetContext;
      if (!ctx) return;
      const width = img.clientWidth || 1;
      windowBox.style.width = `${windowWidthPx(width, ctx.durationS)}px`;
      windowBox.style.left = `${(ctx.placedStartS / ctx.durationS) * width}px`;
      hint.textContent =
        `start ${ctx.placedStartS.toFixed(1)} s (original ${ctx.originalStartS.toFixed(1)} s)` +
        ` - enter to submit, esc to cancel`;
    };
    img.addEventListener("load", position);

    let dragging = false;
    overlay.addEventListener("pointerdown", (e) => {
      dragging = true;
      drag(e);
    });
    overlay.addEventListener("pointermove", (e) => dragging && drag(e));
    overlay.addEventListener("pointerup", () => (dragging = false));
    const drag = (e: PointerEvent) => {
      const ctx = this.onsetContext;
      if (!ctx) return;
      const rect = img.getBoundingClientRect();
      const raw = ((e.clientX - rect.left) / rect.width) * ctx.durationS - 1.5;
      this.onsetContext = this.session.placeOnset(ctx, raw);
      position();
    };

    const close = () => {
      this.onsetContext = null;
      document.removeEventListener("keydown", onEditorKey, true);
      overlay.remove();
      this.renderPage();
    };
    const onEditorKey = async (e: KeyboardEvent) => {
      e.stopPropagation();
      if (e.key === "Escape") close();
      if (e.key === "Enter" && this.onsetContext) {
        try {
          await this.session.submitOnsetCorrection(this.onsetContext);
          close();
          this.advance();
        } catch (err) {
          hint.textContent = String(err);
        }
      }
    };
    document.addEventListener("keydown", onEditorKey, true);
    this.root.appendChild(overlay);
  }
}
