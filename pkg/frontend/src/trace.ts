// Trace inspector: the four-stage timeline of a gridcodex query
// (terminology hits -> enriched query diff -> translated query -> ranked
// hits). Vanilla traces show only the retrieval stage; plain traces show a
// single answer panel. Scores are rendered exactly as they appear in the
// trace payload.

import { clauseLabel, el, rawScore } from "./dom.js";
import type { Trace } from "./types.js";

function panel(name: string, title: string): HTMLElement {
  const node = el("section", "stage-panel");
  node.dataset.stage = name;
  node.append(el("h3", "stage-title", title));
  return node;
}

function termPanel(trace: Trace): HTMLElement {
  const node = panel("terminology", "1 · Terminology hits");
  if (trace.term_hits.length === 0) {
    node.append(el("p", "stage-empty", "no glossary terms matched"));
    return node;
  }
  const list = el("ul", "term-list");
  for (const hit of trace.term_hits) {
    const item = el("li", "term-hit");
    item.append(
      el("strong", "term-name", hit.term),
      el("span", "term-score", ` score=${rawScore(hit.score)} `),
      el("span", "term-definition", hit.definition),
    );
    list.append(item);
  }
  node.append(list);
  return node;
}

/** Whitespace tokens of the enriched query absent from the original are
 * marked as additions; purely presentational, no recomputation. */
function enrichmentPanel(trace: Trace): HTMLElement {
  const node = panel("enrichment", "2 · Enriched query");
  node.append(el("p", "query-original", trace.original_query));
  const enriched = el("p", "query-enriched");
  const originalTokens = new Set(trace.original_query.split(/\s+/));
  const source = trace.enriched_query || trace.original_query;
  source.split(/(\s+)/).forEach((token) => {
    if (token.trim() !== "" && !originalTokens.has(token)) {
      enriched.append(el("mark", "query-added", token));
    } else {
      enriched.append(token);
    }
  });
  node.append(enriched);
  return node;
}

function translationPanel(trace: Trace): HTMLElement {
  const node = panel("translation", "3 · Translated query");
  const translated = trace.translated_query || trace.enriched_query || trace.original_query;
  node.append(el("p", "query-translated", translated));
  node.append(el("p", "stage-note", `detected language: ${trace.detected_language}`));
  return node;
}

function retrievalPanel(trace: Trace, index: number): HTMLElement {
  const node = panel("retrieval", `${index} · Ranked hits`);
  if (trace.retrieval_hits.length === 0) {
    node.append(el("p", "stage-empty", "no chunks retrieved"));
    return node;
  }
  const list = el("ol", "hit-list");
  for (const hit of trace.retrieval_hits) {
    const item = el("li", "retrieval-hit");
    item.dataset.chunkId = hit.chunk_id;
    item.append(
      el("span", "hit-score", rawScore(hit.score)),
      el("span", "hit-level", ` L${hit.level} `),
      el("span", "hit-clause", clauseLabel(hit.clause_path)),
      el("p", "hit-text", hit.text),
    );
    list.append(item);
  }
  node.append(list);
  return node;
}

function answerPanel(trace: Trace): HTMLElement {
  const node = panel("answer", "Model answer");
  node.append(el("p", "answer-text", trace.answer));
  return node;
}

export function renderTraceInspector(trace: Trace): HTMLElement {
  const root = el("section", "trace-inspector");
  root.dataset.traceId = trace.trace_id;
  root.dataset.mode = trace.mode;
  const header = el("header", "trace-header");
  header.append(
    el("h2", "trace-title", `Trace ${trace.trace_id}`),
    el("span", "trace-mode", trace.mode),
  );
  if (trace.abstained) {
    header.append(el("span", "abstention-banner", "abstained"));
  }
  root.append(header);

  if (trace.mode === "gridcodex") {
    root.append(termPanel(trace), enrichmentPanel(trace), translationPanel(trace), retrievalPanel(trace, 4));
  } else if (trace.mode === "vanilla_rag") {
    root.append(retrievalPanel(trace, 1));
  } else {
    root.append(answerPanel(trace));
  }

  if (trace.flags.length > 0) {
    root.append(el("p", "trace-flags", `flags: ${trace.flags.join(", ")}`));
  }
  return root;
}
