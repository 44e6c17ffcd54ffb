import { describe, expect, it } from "vitest";
import { ServeClient, type FetchLike } from "../src/api.js";
import { AdvocateSession } from "../src/session.js";
import type { SelectionEvent } from "../src/types.js";

interface Harness {
  client: ServeClient;
  sentEvents: SelectionEvent[];
  predictCalls: number;
  failPredict: { on: boolean };
  failEvents: { on: boolean };
}

function makeHarness(): Harness {
  const sentEvents: SelectionEvent[] = [];
  const failPredict = { on: false };
  const failEvents = { on: false };
  const state = { predictCalls: 0 };
  const fetchImpl: FetchLike = async (url, init) => {
    if (url.endsWith("/v1/predict")) {
      state.predictCalls++;
      if (failPredict.on) return new Response("oops", { status: 503 });
      return new Response(JSON.stringify({
        template_ids: [7, 3, 9, 1, 4],
        probabilities: [0.4, 0.2, 0.15, 0.15, 0.1],
        model_version: "m-test",
        latency_ms: 3.2,
      }), { status: 200 });
    }
    if (failEvents.on) return new Response("down", { status: 500 });
    for (const line of String(init?.body ?? "").split("\n")) {
      if (line.trim()) sentEvents.push(JSON.parse(line));
    }
    return new Response("{}", { status: 200 });
  };
  const harness = {
    client: new ServeClient("http://svc", fetchImpl),
    sentEvents,
    failPredict,
    failEvents,
    get predictCalls() { return state.predictCalls; },
  };
  return harness as Harness;
}

function makeClock(start = 1000) {
  const state = { t: start };
  return { now: () => state.t, advance: (ms: number) => { state.t += ms; } };
}

describe("advocate session", () => {
  it("treatment renders exactly five suggestions with probabilities", async () => {
    const h = makeHarness();
    const s = new AdvocateSession({ caseId: "c1", group: "treatment", client: h.client });
    await s.onCustomerMessage("where is my refund");
    const visible = s.visibleSuggestions();
    expect(visible).toHaveLength(5);
    expect(visible[0]).toEqual({ templateId: 7, probability: 0.4 });
  });

  it("holdout never renders suggestions but still fetches shadow predictions", async () => {
    const h = makeHarness();
    const s = new AdvocateSession({ caseId: "c2", group: "holdout", client: h.client });
    await s.onCustomerMessage("card is broken");
    expect(h.predictCalls).toBe(1);
    expect(s.visibleSuggestions()).toEqual([]);
    expect(s.shownTemplateIds()).toEqual([]);
    const ev = await s.commitTemplate(9);
    expect(ev.group).toBe("holdout");
    expect(ev.shown_template_ids).toEqual([]);
  });

  it("treatment timer anchors at suggestion render, holdout at receipt", async () => {
    const h = makeHarness();
    const clock = makeClock(0);
    const t = new AdvocateSession({ caseId: "t", group: "treatment", client: h.client,
      clock: clock.now });
    await t.onCustomerMessage("hello");
    clock.advance(8000);
    const evT = await t.commitTemplate(7);
    expect(evT.selection_time_sec).toBeCloseTo(8.0, 3);

    const h2 = makeHarness();
    const clock2 = makeClock(0);
    const hSession = new AdvocateSession({ caseId: "h", group: "holdout",
      client: h2.client, clock: clock2.now });
    await hSession.onCustomerMessage("hello");
    clock2.advance(19000);
    const evH = await hSession.commitTemplate(2);
    expect(evH.selection_time_sec).toBeCloseTo(19.0, 3);
  });

  it("anchor is set once per reply cycle", async () => {
    const h = makeHarness();
    const clock = makeClock(0);
    const s = new AdvocateSession({ caseId: "c", group: "treatment", client: h.client,
      clock: clock.now });
    await s.onCustomerMessage("first");
    clock.advance(5000);
    await s.onCustomerMessage("second message, same cycle");
    clock.advance(5000);
    const ev = await s.commitTemplate(3);
    expect(ev.selection_time_sec).toBeCloseTo(10.0, 3);
  });

  it("every commit produces exactly one event", async () => {
    const h = makeHarness();
    const s = new AdvocateSession({ caseId: "c", group: "treatment", client: h.client });
    await s.onCustomerMessage("msg");
    await s.commitTemplate(7);
    expect(h.sentEvents).toHaveLength(1);
    await expect(s.commitTemplate(7)).rejects.toThrow(/no open reply cycle/);
    expect(h.sentEvents).toHaveLength(1);
  });

  it("degraded predictions still log an event with an empty shown list", async () => {
    const h = makeHarness();
    h.failPredict.on = true;
    const clock = makeClock(0);
    const s = new AdvocateSession({ caseId: "c", group: "treatment", client: h.client,
      clock: clock.now });
    await s.onCustomerMessage("help");
    expect(s.pane).toBe("degraded");
    expect(s.visibleSuggestions()).toEqual([]);
    clock.advance(21000);
    const ev = await s.commitTemplate(5);
    expect(ev.shown_template_ids).toEqual([]);
    expect(ev.selection_time_sec).toBeCloseTo(21.0, 3);
    expect(h.sentEvents).toHaveLength(1);
  });

  it("freehand commits carry the no-template sentinel", async () => {
    const h = makeHarness();
    const s = new AdvocateSession({ caseId: "c", group: "treatment", client: h.client });
    await s.onCustomerMessage("msg");
    const ev = await s.commitFreehand("typed by hand");
    expect(ev.chosen_template_id).toBe(-1);
    expect(s.transcript.at(-1)).toEqual({ role: "ADVOCATE", text: "typed by hand" });
  });

  it("failed event posts stay queued and flush later", async () => {
    const h = makeHarness();
    h.failEvents.on = true;
    const s = new AdvocateSession({ caseId: "c", group: "treatment", client: h.client });
    await s.onCustomerMessage("msg");
    await s.commitTemplate(7);
    expect(h.sentEvents).toHaveLength(0);
    expect(h.client.pendingCount).toBe(1);
    h.failEvents.on = false;
    expect(await h.client.flushEvents()).toBe(true);
    expect(h.sentEvents).toHaveLength(1);
  });

  it("events carry the model version from the prediction", async () => {
    const h = makeHarness();
    const s = new AdvocateSession({ caseId: "c", group: "treatment", client: h.client });
    await s.onCustomerMessage("msg");
    const ev = await s.commitTemplate(3);
    expect(ev.model_version).toBe("m-test");
    expect(ev.timestamp).toMatch(/^\d{4}-\d{2}-\d{2}T/);
  });
});
