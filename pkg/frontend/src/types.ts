// Payload shapes for the GridCodex service /v1/* API. The UI renders these
// verbatim: scores and texts come straight from the payloads, never from
// client-side recomputation.

export type Mode = "gridcodex" | "vanilla_rag" | "plain_llm";

export interface ApiErrorBody {
  code: string;
  message: string;
}

export interface Citation {
  chunk_id: string;
  clause_path: [string, string][]; // (label, heading) pairs, root -> clause
  quote: string;
}

export interface QueryResponse {
  answer: string;
  abstained: boolean;
  citations: Citation[];
  trace_id: string;
}

export interface TermHit {
  term: string;
  definition: string;
  score: number;
}

export interface RetrievalHit {
  chunk_id: string;
  score: number;
  level: number;
  clause_path: [string, string][];
  covered_paths: string[][];
  text: string;
}

export interface Trace {
  trace_id: string;
  mode: Mode;
  original_query: string;
  detected_language: string;
  region: string;
  term_hits: TermHit[];
  enriched_query: string;
  translated_query: string;
  retrieval_hits: RetrievalHit[];
  final_prompt: string;
  answer: string;
  cited_chunk_ids: string[];
  abstained: boolean;
  flags: string[];
  timings: Record<string, number>;
  models: Record<string, string>;
  config: Record<string, unknown>;
}

export interface KbMeta {
  kb_id: string;
  kind: "factual" | "terminology";
  region: string;
  language: string;
  [extra: string]: unknown;
}

export interface Job {
  job_id: string;
  state: "pending" | "running" | "done" | "failed";
  progress: string[];
  error?: string | null;
}

export interface ReportRow {
  region: string;
  mode: Mode;
  system: string;
  items: number;
  failed_items: number;
  answer_quality: number | null;
  faithfulness: number | null;
  recall_fraction: number | null;
  recall_strict: number | null;
}

export interface ReportItem {
  item_id: string;
  region: string;
  mode: Mode;
  failed: boolean;
  answer_quality: number | null;
  faithfulness: number | null;
  recall_fraction: number | null;
  recall_strict: boolean | null;
  abstained: boolean | null;
  trace_id: string | null;
  flags: string[];
  error?: string;
}

export interface Report {
  k: number;
  config: Record<string, unknown>;
  models: Record<string, string>;
  composite_formula: string;
  rows: ReportRow[];
  items: ReportItem[];
}
