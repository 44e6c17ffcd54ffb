import type { ChatMessage, PredictRequest, PredictResponse, SelectionEvent } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** Thin client for the suggestion service: /v1/predict and /v1/events. */
export class ServeClient {
  private pendingEvents: SelectionEvent[] = [];

  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (u, i) => fetch(u, i),
  ) {}

  async predict(caseId: string, messages: ChatMessage[], k = 5): Promise<PredictResponse> {
    const body: PredictRequest = { case_id: caseId, messages, k };
    const resp = await this.fetchImpl(`${this.baseUrl}/v1/predict`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!resp.ok) {
      throw new Error(`predict failed: HTTP ${resp.status}`);
    }
    return (await resp.json()) as PredictResponse;
  }

  /** Fire-and-forget event post with a local retry queue. */
  async postEvent(event: SelectionEvent): Promise<boolean> {
    this.pendingEvents.push(event);
    return this.flushEvents();
  }

  async flushEvents(): Promise<boolean> {
    if (this.pendingEvents.length === 0) return true;
    const batch = this.pendingEvents;
    const body = batch.map((e) => JSON.stringify(e)).join("\n");
    try {
      const resp = await this.fetchImpl(`${this.baseUrl}/v1/events`, {
        method: "POST",
        headers: { "Content-Type": "application/x-ndjson" },
        body,
      });
      if (!resp.ok) return false;
      this.pendingEvents = [];
      return true;
    } catch {
      return false; // kept in the queue for the next flush
    }
  }

  get pendingCount(): number {
    return this.pendingEvents.length;
  }
}
