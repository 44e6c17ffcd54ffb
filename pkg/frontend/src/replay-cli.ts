import { writeFileSync } from "node:fs";
import { DEFAULT_REPLAY, runReplay, toNdjson, type ReplayConfig } from "./replay.js";

function parseArgs(argv: string[]): { cfg: ReplayConfig; out: string; predictions?: string } {
  const cfg: ReplayConfig = { ...DEFAULT_REPLAY, persona: { ...DEFAULT_REPLAY.persona } };
  let out = "events.ndjson";
  let predictions: string | undefined;
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    const value = argv[i + 1];
    if (value === undefined) throw new Error(`missing value for ${key}`);
    switch (key) {
      case "--sessions": cfg.sessions = Number(value); break;
      case "--templates": cfg.templates = Number(value); break;
      case "--holdout": cfg.holdoutFraction = Number(value); break;
      case "--salt": cfg.salt = value; break;
      case "--seed": cfg.seed = Number(value); break;
      case "--model-version": cfg.modelVersion = value; break;
      case "--weeks": cfg.weeks = Number(value); break;
      case "--out": out = value; break;
      case "--predictions": predictions = value; break;
      default: throw new Error(`unknown flag ${key}`);
    }
  }
  return { cfg, out, predictions };
}

const { cfg, out, predictions } = parseArgs(process.argv.slice(2));
const result = await runReplay(cfg);
writeFileSync(out, toNdjson(result.events));
if (predictions) {
  writeFileSync(predictions, toNdjson(result.predictions));
}
const ratio = result.holdoutCount / cfg.sessions;
console.log(`wrote ${out}: ${result.events.length} events, holdout ratio ${ratio.toFixed(4)}`);
