import type { ServeClient } from "./api.js";
import type { ChatMessage, Group, SelectionEvent, Suggestion } from "./types.js";

export type PaneState = "idle" | "awaiting" | "ready" | "degraded";

export interface SessionOptions {
  caseId: string;
  group: Group;
  client: ServeClient;
  k?: number;
  /** Monotonic milliseconds; performance.now in the browser. */
  clock?: () => number;
  /** Wall clock for event timestamps. */
  wallClock?: () => Date;
}

/**
 * One advocate session: tracks the live transcript, fetches suggestions on
 * every new customer message, and turns each template commit into exactly
 * one SelectionEvent.
 *
 * Holdout sessions fetch predictions too (the server logs them as shadow
 * predictions) but never surface them; their timer anchors at message
 * receipt instead of suggestion render. The anchor is set once per reply
 * cycle.
 */
export class AdvocateSession {
  readonly caseId: string;
  readonly group: Group;
  readonly transcript: ChatMessage[] = [];
  pane: PaneState = "idle";

  private client: ServeClient;
  private k: number;
  private clock: () => number;
  private wallClock: () => Date;

  private suggestions: Suggestion[] = [];
  private modelVersion = "";
  private anchorMs: number | null = null;
  private receiptMs: number | null = null;
  private cycleOpen = false;

  constructor(opts: SessionOptions) {
    this.caseId = opts.caseId;
    this.group = opts.group;
    this.client = opts.client;
    this.k = opts.k ?? 5;
    this.clock = opts.clock ?? (() => performance.now());
    this.wallClock = opts.wallClock ?? (() => new Date());
  }

  get lastModelVersion(): string {
    return this.modelVersion;
  }

  /** Suggestions the UI may render: always empty for holdout sessions. */
  visibleSuggestions(): Suggestion[] {
    if (this.group === "holdout") return [];
    if (this.pane !== "ready") return [];
    return this.suggestions;
  }

  /** Ids that were actually shown to the advocate this cycle. */
  shownTemplateIds(): number[] {
    return this.visibleSuggestions().map((s) => s.templateId);
  }

  onSystemMessage(text: string): void {
    this.transcript.push({ role: "SYSTEM", text });
  }

  async onCustomerMessage(text: string): Promise<void> {
    this.transcript.push({ role: "CUSTOMER", text });
    const firstOfCycle = !this.cycleOpen;
    this.cycleOpen = true;
    if (firstOfCycle) {
      this.receiptMs = this.clock();
      if (this.group === "holdout") {
        this.anchorMs = this.receiptMs; // message receipt anchors holdout timing
      }
    }
    this.pane = "awaiting";
    try {
      const resp = await this.client.predict(this.caseId, [...this.transcript], this.k);
      this.suggestions = resp.template_ids.map((id, i) => ({
        templateId: id,
        probability: resp.probabilities[i] ?? 0,
      }));
      this.modelVersion = resp.model_version;
      this.pane = "ready";
      if (this.group === "treatment" && firstOfCycle) {
        this.anchorMs = this.clock(); // suggestion render anchors treatment timing
      }
    } catch {
      this.suggestions = [];
      this.pane = "degraded";
    }
  }

  /** Commit a template reply; returns the single SelectionEvent it logs. */
  async commitTemplate(templateId: number, replyText = ""): Promise<SelectionEvent> {
    return this.commit(templateId, replyText);
  }

  /** Freehand replies carry the no-template sentinel (-1). */
  async commitFreehand(replyText: string): Promise<SelectionEvent> {
    return this.commit(-1, replyText);
  }

  private async commit(templateId: number, replyText: string): Promise<SelectionEvent> {
    if (!this.cycleOpen) {
      throw new Error("no open reply cycle to commit");
    }
    const anchor = this.anchorMs ?? this.receiptMs;
    if (anchor === null) {
      throw new Error("reply cycle has no timer anchor");
    }
    const elapsedSec = Math.max(0.001, (this.clock() - anchor) / 1000);
    const event: SelectionEvent = {
      case_id: this.caseId,
      timestamp: this.wallClock().toISOString(),
      group: this.group,
      shown_template_ids: this.shownTemplateIds(),
      chosen_template_id: templateId,
      selection_time_sec: elapsedSec,
      model_version: this.modelVersion,
    };
    this.transcript.push({ role: "ADVOCATE", text: replyText });
    this.cycleOpen = false;
    this.anchorMs = null;
    this.receiptMs = null;
    this.suggestions = [];
    this.pane = "idle";
    await this.client.postEvent(event);
    return event;
  }
}
