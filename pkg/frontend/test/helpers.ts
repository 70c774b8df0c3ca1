import { readFileSync } from "node:fs";
import path from "node:path";
import { inject } from "vitest";
import { GridCodexClient } from "../src/api.js";

export function client(): GridCodexClient {
  return new GridCodexClient({ baseUrl: inject("baseUrl") });
}

export interface BenchItem {
  item_id: string;
  region: string;
  question: string;
  reference_answer: string;
  gold_evidence: string[][];
}

export function benchItems(): BenchItem[] {
  const file = path.resolve(__dirname, "..", "..", "fixtures", "bench_bilingual.jsonl");
  return readFileSync(file, "utf-8")
    .split("\n")
    .filter((line) => line.trim() !== "")
    .map((line) => JSON.parse(line) as BenchItem);
}

export function nlQuestion(): string {
  const item = benchItems().find((i) => i.region === "NL");
  if (!item) throw new Error("no NL item in the bundled benchmark");
  return item.question;
}
