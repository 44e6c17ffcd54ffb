import { execFileSync } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";
import { DEFAULT_REPLAY, makeRng, runReplay, toNdjson, type ReplayConfig } from "../src/replay.js";

function cfg(overrides: Partial<ReplayConfig> = {}): ReplayConfig {
  return { ...DEFAULT_REPLAY, persona: { ...DEFAULT_REPLAY.persona }, ...overrides };
}

describe("replay driver", () => {
  it("is deterministic for a fixed seed", async () => {
    const a = await runReplay(cfg({ sessions: 300, seed: 11 }));
    const b = await runReplay(cfg({ sessions: 300, seed: 11 }));
    expect(toNdjson(a.events)).toBe(toNdjson(b.events));
    expect(toNdjson(a.predictions)).toBe(toNdjson(b.predictions));
  });

  it("holds the 2% holdout ratio over 10k sessions", async () => {
    const r = await runReplay(cfg({ sessions: 10_000, holdoutFraction: 0.02 }));
    const ratio = r.holdoutCount / 10_000;
    expect(Math.abs(ratio - 0.02)).toBeLessThan(0.005);
  }, 120_000);

  it("treatment panel hits are faster than manual searches", async () => {
    const r = await runReplay(cfg({ sessions: 800, holdoutFraction: 0.3, seed: 5 }));
    const panel = r.events.filter(
      (e) => e.group === "treatment" && e.shown_template_ids.includes(e.chosen_template_id));
    const manual = r.events.filter((e) => e.group === "holdout");
    const mean = (xs: number[]) => xs.reduce((s, x) => s + x, 0) / xs.length;
    expect(panel.length).toBeGreaterThan(50);
    expect(manual.length).toBeGreaterThan(50);
    expect(mean(panel.map((e) => e.selection_time_sec)))
      .toBeLessThan(mean(manual.map((e) => e.selection_time_sec)) - 5);
  });

  it("produces one prediction record per session", async () => {
    const r = await runReplay(cfg({ sessions: 120, seed: 2 }));
    expect(r.predictions).toHaveLength(120);
    expect(r.events).toHaveLength(120);
    const ids = new Set(r.predictions.map((p) => p.case_id));
    expect(ids.size).toBe(120);
  });

  it("rng is stable", () => {
    const rng = makeRng(42);
    const seq = [rng(), rng(), rng()];
    const rng2 = makeRng(42);
    expect([rng2(), rng2(), rng2()]).toEqual(seq);
  });
});

describe("replay feeds the analytics pipeline", () => {
  it("constructed accuracy/savings dependence is detected as increasing", async () => {
    const r = await runReplay(cfg({ sessions: 12_000, holdoutFraction: 0.25,
      templates: 24, seed: 9 }));
    const dir = mkdtempSync(join(tmpdir(), "replay-"));
    const eventsPath = join(dir, "events.ndjson");
    const predsPath = join(dir, "preds.ndjson");
    writeFileSync(eventsPath, toNdjson(r.events));
    writeFileSync(predsPath, toNdjson(r.predictions));
    const script = [
      "import json, sys",
      "from suggestlab import abtest",
      "events = abtest.load_events(sys.argv[1])",
      "preds = abtest.load_predictions(sys.argv[2])",
      "rows = abtest.accuracy_vs_savings(events, preds, 300)",
      "rows.sort(key=lambda r: r.accuracy)",
      "trend = abtest.mann_kendall([r.mean_saving for r in rows])",
      "print(json.dumps({'n': len(rows), 'direction': trend.direction, 'p': trend.p_value}))",
    ].join("\n");
    const out = execFileSync("python3", ["-c", script, eventsPath, predsPath],
      { encoding: "utf-8" });
    const result = JSON.parse(out.trim());
    expect(result.n).toBeGreaterThanOrEqual(15);
    expect(result.direction).toBe("increasing");
    expect(result.p).toBeLessThan(0.05);
  }, 180_000);
});
