import type { Group } from "./types.js";

// Keyed assignment identical to the analytics pipeline: the first 8 bytes of
// SHA-256("salt:case_id"), read big-endian, scaled to [0, 1).
export async function assignmentValue(caseId: string, salt: string): Promise<number> {
  const data = new TextEncoder().encode(`${salt}:${caseId}`);
  const digest = new Uint8Array(await crypto.subtle.digest("SHA-256", data));
  let value = 0n;
  for (let i = 0; i < 8; i++) {
    value = (value << 8n) | BigInt(digest[i]!);
  }
  return Number(value) / 2 ** 64;
}

export async function assignGroup(
  caseId: string,
  holdoutFraction: number,
  salt: string,
): Promise<Group> {
  if (!(holdoutFraction > 0 && holdoutFraction < 1)) {
    throw new Error("holdoutFraction must lie in (0, 1)");
  }
  const u = await assignmentValue(caseId, salt);
  return u < holdoutFraction ? "holdout" : "treatment";
}
