import { describe, expect, it } from "vitest";
import { assignGroup, assignmentValue } from "../src/assign.js";

describe("group assignment", () => {
  it("is deterministic for a fixed (salt, case_id)", async () => {
    for (const id of ["case-1", "case-2", "weird-βγ"]) {
      expect(await assignGroup(id, 0.02, "s1")).toBe(await assignGroup(id, 0.02, "s1"));
    }
  });

  it("matches the analytics pipeline's hash on pinned fixtures", async () => {
    // frozen from the backend implementation: sha256("salt:case_id")[:8] / 2^64
    const expected: Array<[string, number]> = [
      ["case-0", 0.5697187868509429],
      ["case-1", 0.4282091005405609],
      ["case-2", 0.48411284709663294],
      ["case-3", 0.9379890633239785],
      ["case-4", 0.6171217471191849],
    ];
    for (const [caseId, value] of expected) {
      expect(await assignmentValue(caseId, "salt")).toBeCloseTo(value, 12);
    }
    expect(await assignGroup("case-7", 0.5, "fix")).toBe("holdout");
    expect(await assignGroup("case-8", 0.5, "fix")).toBe("treatment");
  });

  it("hits the configured holdout rate within tolerance", async () => {
    const n = 10_000;
    let holdout = 0;
    for (let i = 0; i < n; i++) {
      if ((await assignGroup(`case-${i}`, 0.02, "salt")) === "holdout") holdout++;
    }
    expect(Math.abs(holdout / n - 0.02)).toBeLessThan(0.005);
  });

  it("tiny fractions assign everything to treatment", async () => {
    for (let i = 0; i < 200; i++) {
      expect(await assignGroup(`c${i}`, 1e-12, "z")).toBe("treatment");
    }
  });

  it("rejects out-of-range fractions", async () => {
    await expect(assignGroup("c", 0, "s")).rejects.toThrow();
    await expect(assignGroup("c", 1, "s")).rejects.toThrow();
  });

  it("produces values in [0, 1)", async () => {
    for (let i = 0; i < 50; i++) {
      const v = await assignmentValue(`case-${i}`, "q");
      expect(v).toBeGreaterThanOrEqual(0);
      expect(v).toBeLessThan(1);
    }
  });
});
