import { assignGroup } from "./assign.js";
import { ServeClient, type FetchLike } from "./api.js";
import { AdvocateSession } from "./session.js";
import type { SelectionEvent } from "./types.js";

/** Deterministic 32-bit PRNG (mulberry32). */
export function makeRng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export interface PersonaConfig {
  /** Base time to pick from the suggestion panel, ms. */
  panelMs: number;
  /** Extra per rank position of the wanted template in the panel, ms. */
  rankPenaltyMs: number;
  /** Manual template search time (holdout, or panel miss), ms. */
  manualMs: number;
  /** Multiplicative jitter breadth (0.2 -> x in [0.9, 1.1]). */
  jitter: number;
}

export const DEFAULT_PERSONA: PersonaConfig = {
  panelMs: 6_000,
  rankPenaltyMs: 1_500,
  manualMs: 19_000,
  jitter: 0.3,
};

export interface ReplayConfig {
  sessions: number;
  templates: number;
  holdoutFraction: number;
  salt: string;
  seed: number;
  modelVersion: string;
  persona: PersonaConfig;
  /** Per-template probability that the true template appears in the top-5. */
  minAccuracy: number;
  maxAccuracy: number;
  /** Simulated span of the log in weeks (events get spread across it). */
  weeks: number;
}

export const DEFAULT_REPLAY: ReplayConfig = {
  sessions: 10_000,
  templates: 64,
  holdoutFraction: 0.02,
  salt: "replay",
  seed: 1,
  modelVersion: "replay-v1",
  persona: DEFAULT_PERSONA,
  minAccuracy: 0.25,
  maxAccuracy: 0.95,
  weeks: 8,
}

export interface PredictionRecord {
  case_id: string;
  timestamp: string;
  template_ids: number[];
  model_version: string;
}

export interface ReplayResult {
  events: SelectionEvent[];
  predictions: PredictionRecord[];
  holdoutCount: number;
}

const WORDS = ["balance", "refund", "card", "transfer", "login", "limit", "badge",
  "deposit", "status", "verify", "amount", "account"];

function customerText(rng: () => number, templateId: number): string {
  const parts = [`issue-${templateId}`];
  const n = 3 + Math.floor(rng() * 4);
  for (let i = 0; i < n; i++) {
    parts.push(WORDS[Math.floor(rng() * WORDS.length)]!);
  }
  return parts.join(" ");
}

/**
 * A fetch substitute that emulates the suggestion service: per-template
 * accuracy controls whether the true template (parsed from the scripted
 * message) lands in the top-5. Lets the replay driver exercise the exact
 * UI code paths headlessly while also producing the shadow-prediction log
 * the analytics join against.
 */
export function mockServeFetch(cfg: ReplayConfig, rng: () => number,
  predictions: PredictionRecord[], wallClock: () => Date): FetchLike {
  return async (url: string, init?: RequestInit) => {
    if (url.endsWith("/v1/events")) {
      return new Response("{}", { status: 200 });
    }
    const body = JSON.parse(String(init?.body ?? "{}"));
    const text: string = body.messages?.[0]?.text ?? "";
    const match = /issue-(\d+)/.exec(text);
    const trueId = match ? Number(match[1]) : 0;
    const span = cfg.maxAccuracy - cfg.minAccuracy;
    const accuracy = cfg.templates > 1
      ? cfg.minAccuracy + (span * trueId) / (cfg.templates - 1)
      : cfg.maxAccuracy;
    const hit = rng() < accuracy;
    const ids: number[] = [];
    while (ids.length < 5) {
      const cand = Math.floor(rng() * cfg.templates);
      if (cand !== trueId && !ids.includes(cand)) ids.push(cand);
    }
    if (hit) {
      const rank = Math.floor(rng() * 3); // accurate model ranks it high
      ids.splice(rank, 0, trueId);
      ids.length = 5;
    }
    const probs = [0.35, 0.25, 0.18, 0.12, 0.1];
    predictions.push({
      case_id: body.case_id,
      timestamp: wallClock().toISOString(),
      template_ids: ids,
      model_version: cfg.modelVersion,
    });
    const payload = {
      template_ids: ids,
      probabilities: probs,
      model_version: cfg.modelVersion,
      latency_ms: 5.0,
    };
    return new Response(JSON.stringify(payload), { status: 200 });
  };
}

/** Drive N scripted sessions through the real session/client code paths. */
export async function runReplay(cfg: ReplayConfig,
  fetchImpl?: FetchLike): Promise<ReplayResult> {
  const rng = makeRng(cfg.seed);
  const events: SelectionEvent[] = [];
  const predictions: PredictionRecord[] = [];

  let fakeMono = 0;
  const clock = () => fakeMono;
  const spanMs = cfg.weeks * 7 * 86_400_000;
  const epoch = Date.UTC(2024, 0, 1);
  let sessionIndex = 0;
  const wallClock = () =>
    new Date(epoch + (sessionIndex / Math.max(1, cfg.sessions)) * spanMs);

  const transport = fetchImpl ?? mockServeFetch(cfg, rng, predictions, wallClock);
  let holdoutCount = 0;

  for (sessionIndex = 0; sessionIndex < cfg.sessions; sessionIndex++) {
    const caseId = `replay-${cfg.seed}-${String(sessionIndex).padStart(6, "0")}`;
    const group = await assignGroup(caseId, cfg.holdoutFraction, cfg.salt);
    if (group === "holdout") holdoutCount++;
    const client = new ServeClient("http://mock", transport);
    const session = new AdvocateSession({ caseId, group, client, clock, wallClock });

    const trueId = Math.floor(rng() * cfg.templates);
    await session.onCustomerMessage(customerText(rng, trueId));

    const shown = session.shownTemplateIds();
    const rank = shown.indexOf(trueId);
    const p = cfg.persona;
    const jitter = 1 + p.jitter * (rng() - 0.5);
    let reactionMs: number;
    if (group === "treatment" && rank >= 0) {
      reactionMs = (p.panelMs + p.rankPenaltyMs * rank) * jitter;
    } else {
      reactionMs = p.manualMs * jitter;
    }
    fakeMono += reactionMs;
    const event = await session.commitTemplate(trueId, `template-${trueId}`);
    events.push(event);
    fakeMono += 1000; // idle gap between sessions
  }
  return { events, predictions, holdoutCount };
}

export function toNdjson(rows: object[]): string {
  return rows.map((r) => JSON.stringify(r)).join("\n") + "\n";
}
